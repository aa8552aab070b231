use std::sync::Arc;

use nondecomp::confusion::{empirical_conf, exact_conf, mix_conf};
use nondecomp::rule::ClassifierRule;
use nondecomp::synth::{random_simplex, FiniteDistribution};
use nondecomp::{ClassDistribution, ConfusionMatrix, CpeModel, GainMatrix, Scorer};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rule(r: &mut ChaCha8Rng, d: &FiniteDistribution) -> ClassifierRule {
    let n = d.n();
    let oracle = Arc::new(Scorer::finite_oracle(d.clone()));
    let mut gain =
        || GainMatrix::new(n, (0..n * n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let g1 = gain();
    let g2 = gain();
    let h = ClassDistribution::new(random_simplex(r, n)).unwrap();
    let w = random_simplex(r, 3);
    ClassifierRule::mixture(
        w,
        vec![
            ClassifierRule::weighted_argmax(g1, Arc::clone(&oracle)),
            ClassifierRule::weighted_argmax(g2, oracle),
            ClassifierRule::constant(h),
        ],
    )
    .unwrap()
}

fn check_feasible(c: &ConfusionMatrix, priors: &[f64]) {
    assert!(c.entries().iter().all(|v| *v >= 0.0));
    assert!((c.total() - 1.0).abs() <= 1e-9);
    c.check_priors(priors, 1e-9).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_confusions_are_feasible(seed in any::<u64>(), n in 2usize..5, k in 1usize..7) {
        let d = FiniteDistribution::random(n, k, seed).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let rule = random_rule(&mut r, &d);
        check_feasible(&exact_conf(&rule, &d).unwrap(), d.priors().as_slice());
    }

    #[test]
    fn empirical_confusions_are_feasible(seed in any::<u64>(), n in 2usize..5, m in 1usize..200) {
        let d = FiniteDistribution::random(n, 4, seed).unwrap();
        let s = d.sample(m, seed).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let rule = random_rule(&mut r, &d);
        check_feasible(&empirical_conf(&rule, &s).unwrap(), &s.priors());
    }

    #[test]
    fn mixture_law_holds(seed in any::<u64>(), n in 2usize..5, k in 1usize..7, parts in 1usize..6) {
        let d = FiniteDistribution::random(n, k, seed).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let rules: Vec<ClassifierRule> = (0..parts).map(|_| random_rule(&mut r, &d)).collect();
        let w = random_simplex(&mut r, parts);
        let lhs = exact_conf(&ClassifierRule::mixture(w.clone(), rules.clone()).unwrap(), &d).unwrap();
        let confs: Vec<ConfusionMatrix> = rules.iter().map(|h| exact_conf(h, &d).unwrap()).collect();
        let pairs: Vec<(f64, &ConfusionMatrix)> = w.iter().copied().zip(&confs).collect();
        prop_assert!(lhs.max_abs_diff(&mix_conf(&pairs).unwrap()) <= 1e-12);
    }

    #[test]
    fn positive_scaling_keeps_predictions(seed in any::<u64>(), n in 2usize..6, c in 1e-6f64..1e6) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let g = GainMatrix::new(n, (0..n * n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let gc = g.scaled(c);
        for _ in 0..200 {
            let eta = random_simplex(&mut r, n);
            prop_assert_eq!(g.argmax_column(&eta), gc.argmax_column(&eta));
        }
    }
}

#[test]
fn gain_and_triple_gain_agree_on_simplex_points() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let n = 4;
    let g = GainMatrix::new(n, (0..n * n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let model = CpeModel::new(
        n,
        n,
        (0..n * (n + 1))
            .map(|_| r.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    let scorer = Arc::new(Scorer::Logistic(model));
    let a = ClassifierRule::weighted_argmax(g.clone(), Arc::clone(&scorer));
    let b = ClassifierRule::weighted_argmax(g.scaled(3.0), scorer);
    for _ in 0..1000 {
        let x = random_simplex(&mut r, n);
        assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
    }
}

#[test]
fn nested_mixture_flattens_to_same_outputs() {
    let d = FiniteDistribution::random(3, 5, 11).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let inner = random_rule(&mut r, &d);
    let other = random_rule(&mut r, &d);
    let outer =
        ClassifierRule::mixture(vec![0.4, 0.6], vec![inner.clone(), other.clone()]).unwrap();
    let ClassifierRule::Mixture { components, .. } = &outer else {
        panic!("expected a mixture");
    };
    assert!(components
        .iter()
        .all(|c| !matches!(c, ClassifierRule::Mixture { .. })));
    for p in d.points() {
        let a = inner.predict(&p.x).unwrap();
        let b = other.predict(&p.x).unwrap();
        let o = outer.predict(&p.x).unwrap();
        for i in 0..3 {
            assert!((o[i] - (0.4 * a[i] + 0.6 * b[i])).abs() <= 1e-15);
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[test]
fn empirical_confusion_approaches_exact() {
    let d = FiniteDistribution::random(3, 6, 21).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(21);
    let rule = random_rule(&mut r, &d);
    let exact = exact_conf(&rule, &d).unwrap();
    for m in [100usize, 1000, 10_000] {
        let errs: Vec<f64> = (0..11u64)
            .map(|seed| {
                let s = d.sample(m, seed).unwrap();
                empirical_conf(&rule, &s).unwrap().max_abs_diff(&exact)
            })
            .collect();
        let med = median(errs);
        assert!(med <= 5.0 / (m as f64).sqrt(), "m={m} median error {med}");
    }
}
