use nondecomp::metrics::{
    eval_metric, eval_smoothed, grad_smoothed, smoothing_constants, MetricId, SmoothedMetric,
};
use nondecomp::synth::FiniteDistribution;
use nondecomp::ConfusionMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SMOOTHABLE: [MetricId; 3] = [MetricId::HMean, MetricId::QMean, MetricId::GMean];

fn metric_strategy() -> impl Strategy<Value = MetricId> {
    prop::sample::select(SMOOTHABLE.to_vec())
}

fn rho_strategy() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.3, 0.1, 0.05, 0.01])
}

fn pair(seed: u64, n: usize) -> (FiniteDistribution, ConfusionMatrix, ConfusionMatrix) {
    let d = FiniteDistribution::random(n, 5, seed).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let a = d.random_feasible_conf(&mut r);
    let b = d.random_feasible_conf(&mut r);
    (d, a, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lipschitz_bound_holds(seed in any::<u64>(), n in 2usize..5, base in metric_strategy(), rho in rho_strategy()) {
        let (d, a, b) = pair(seed, n);
        let sm = SmoothedMetric::new(base, rho).unwrap();
        let l = smoothing_constants(&sm, d.priors().min(), n).unwrap().lipschitz;
        let diff = (eval_smoothed(&sm, &a).unwrap() - eval_smoothed(&sm, &b).unwrap()).abs();
        prop_assert!(diff <= l * a.l1_distance(&b) + 1e-12, "diff {} > {}", diff, l * a.l1_distance(&b));
    }

    #[test]
    fn gradient_is_bounded_by_lipschitz_constant(seed in any::<u64>(), n in 2usize..5, base in metric_strategy(), rho in rho_strategy()) {
        let (d, a, _) = pair(seed, n);
        let sm = SmoothedMetric::new(base, rho).unwrap();
        let l = smoothing_constants(&sm, d.priors().min(), n).unwrap().lipschitz;
        prop_assert!(grad_smoothed(&sm, &a).unwrap().linf() <= l + 1e-12);
    }

    #[test]
    fn smoothed_metrics_are_concave(seed in any::<u64>(), n in 2usize..5, base in metric_strategy(), rho in rho_strategy(), t in 0.0f64..1.0) {
        let (_, a, b) = pair(seed, n);
        let sm = SmoothedMetric::new(base, rho).unwrap();
        let mix: Vec<f64> = a.entries().iter().zip(b.entries()).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let mid = eval_smoothed(&sm, &ConfusionMatrix::raw(n, mix).unwrap()).unwrap();
        let chord = t * eval_smoothed(&sm, &a).unwrap() + (1.0 - t) * eval_smoothed(&sm, &b).unwrap();
        prop_assert!(mid >= chord - 1e-12);
    }

    #[test]
    fn moving_mass_onto_diagonal_never_hurts(seed in any::<u64>(), n in 2usize..5, base in metric_strategy(), rho in rho_strategy(), frac in 0.0f64..=1.0) {
        let (_, a, _) = pair(seed, n);
        let sm = SmoothedMetric::new(base, rho).unwrap();
        let before = eval_smoothed(&sm, &a).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let u = r.random_range(0..n);
        let v = (u + r.random_range(1..n)) % n;
        let mut e = a.entries().to_vec();
        let delta = frac * e[u * n + v];
        e[u * n + v] -= delta;
        e[u * n + u] += delta;
        let after = eval_smoothed(&sm, &ConfusionMatrix::raw(n, e).unwrap()).unwrap();
        prop_assert!(after >= before - 1e-12);
    }

    #[test]
    fn micro_f1_reduces_to_binary_f1(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0) {
        let s = a + b + c + d;
        prop_assume!(s > 0.0);
        let m = ConfusionMatrix::new(2, vec![a / s, b / s, c / s, d / s]).unwrap();
        let micro = eval_metric(MetricId::MicroF1, &m).unwrap();
        let binary = eval_metric(MetricId::BinaryF1, &m).unwrap();
        prop_assert!((micro - binary).abs() <= 1e-15);
    }

    #[test]
    fn smoothed_gradient_matches_central_differences(seed in any::<u64>(), n in 2usize..5, base in metric_strategy(), rho in rho_strategy()) {
        let (_, a, _) = pair(seed, n);
        let sm = SmoothedMetric::new(base, rho).unwrap();
        let g = grad_smoothed(&sm, &a).unwrap();
        let h = 1e-6;
        for k in 0..n * n {
            let mut p = a.entries().to_vec();
            let mut q = a.entries().to_vec();
            p[k] += h;
            q[k] -= h;
            let fd = (eval_smoothed(&sm, &ConfusionMatrix::raw(n, p).unwrap()).unwrap()
                - eval_smoothed(&sm, &ConfusionMatrix::raw(n, q).unwrap()).unwrap())
                / (2.0 * h);
            prop_assert!((fd - g.entries()[k]).abs() <= 1e-4 * g.linf());
        }
    }

    #[test]
    fn metrics_stay_in_unit_interval(seed in any::<u64>(), n in 2usize..5) {
        let (_, a, _) = pair(seed, n);
        for id in MetricId::ALL {
            if id.check_n(n).is_err() || id == MetricId::Ams {
                continue;
            }
            let v = eval_metric(id, &a).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "{} = {}", id, v);
        }
    }
}
