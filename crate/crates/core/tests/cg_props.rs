use std::sync::Arc;

use nondecomp::cg::{bayescg, cg_on, idealized_cg, CgConfig};
use nondecomp::metrics::{
    eval_smoothed, smoothing_constants, MetricId, MetricSpec, SmoothedMetric,
};
use nondecomp::oracle::grid_oracle_optimum;
use nondecomp::plugin::{SplitConfig, TuningSet};
use nondecomp::synth::FiniteDistribution;
use nondecomp::{
    empirical_conf, exact_conf, ClassDistribution, ClassifierRule, CpeSource, LabeledSample, Scorer,
};

#[test]
fn idealized_cg_meets_its_bound_on_finite_instances() {
    for seed in 0..4u64 {
        let d = FiniteDistribution::random(2, 3, 30 + seed).unwrap();
        let pi_min = d.priors().min();
        for base in [MetricId::HMean, MetricId::QMean, MetricId::GMean] {
            let sm = SmoothedMetric::new(base, 0.1).unwrap();
            let beta = smoothing_constants(&sm, pi_min, 2).unwrap().smoothness;
            let oracle = grid_oracle_optimum(&d, &MetricSpec::Smoothed(sm), 101).unwrap();
            for t in [5usize, 50, 500] {
                let r = idealized_cg(&d, &sm, &CgConfig::with_iterations(t)).unwrap();
                let achieved = eval_smoothed(&sm, &exact_conf(&r.ensemble, &d).unwrap()).unwrap();
                assert!(oracle.optimum_value - achieved <= 8.0 * beta / (t as f64 + 2.0) + 1e-9);
            }
        }
    }
}

#[test]
fn idealized_cg_reaches_half_on_coin_flip() {
    let d = FiniteDistribution::coin_flip();
    let sm = SmoothedMetric::new(MetricId::HMean, 1e-3).unwrap();
    let r = idealized_cg(&d, &sm, &CgConfig::with_iterations(2000)).unwrap();
    assert!(eval_smoothed(&sm, &exact_conf(&r.ensemble, &d).unwrap()).unwrap() >= 0.49);
}

#[test]
fn gradients_stay_within_lipschitz_constant() {
    let d = FiniteDistribution::random(3, 6, 12).unwrap();
    for base in [MetricId::HMean, MetricId::QMean, MetricId::GMean] {
        for rho in [0.1, 0.01] {
            let sm = SmoothedMetric::new(base, rho).unwrap();
            let l = smoothing_constants(&sm, d.priors().min(), 3)
                .unwrap()
                .lipschitz;
            let r = idealized_cg(&d, &sm, &CgConfig::with_iterations(200)).unwrap();
            for g in &r.gains {
                assert!(
                    g.linf() <= l + 1e-12,
                    "{base} rho={rho}: {} > {l}",
                    g.linf()
                );
            }
        }
    }
}

/// A sample whose empirical distribution equals `d` exactly, given masses
/// and conditionals that are multiples of `1/(per_point·K)`.
fn exact_replica(d: &FiniteDistribution, per_point: usize) -> LabeledSample {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for p in d.points() {
        let total = (p.q * per_point as f64 * d.len() as f64).round() as usize;
        for (y, e) in p.eta.as_slice().iter().enumerate() {
            for _ in 0..(e * total as f64).round() as usize {
                xs.push(p.x.clone());
                ys.push(y);
            }
        }
    }
    LabeledSample::new(d.n(), xs, ys).unwrap()
}

#[test]
fn oracle_bayescg_reproduces_idealized_cg() {
    let d = FiniteDistribution::from_masses(
        vec![0.25, 0.25, 0.5],
        vec![
            ClassDistribution::new(vec![0.75, 0.25]).unwrap(),
            ClassDistribution::new(vec![0.5, 0.5]).unwrap(),
            ClassDistribution::new(vec![0.125, 0.875]).unwrap(),
        ],
    )
    .unwrap();
    let replica = exact_replica(&d, 64);
    let scorer = Arc::new(Scorer::finite_oracle(d.clone()));
    let sm = SmoothedMetric::new(MetricId::HMean, 0.01).unwrap();
    let cfg = CgConfig::with_iterations(300);
    let ideal = idealized_cg(&d, &sm, &cfg).unwrap();
    let tuning = TuningSet::from_sample(&replica, &scorer).unwrap();
    let sample_based = cg_on(&tuning, Arc::clone(&scorer), &sm, &cfg).unwrap();
    for (a, b) in ideal.gains.iter().zip(&sample_based.gains) {
        let ja = a.argmax_column(d.points()[0].eta.as_slice());
        let jb = b.argmax_column(d.points()[0].eta.as_slice());
        assert_eq!(ja, jb);
        let diff = a
            .entries()
            .iter()
            .zip(b.entries())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff <= 1e-9, "gain difference {diff}");
    }
    for p in d.points() {
        let a = ideal.ensemble.predict(&p.x).unwrap();
        let b = sample_based.ensemble.predict(&p.x).unwrap();
        assert!(a.l1_distance(b.as_slice()) <= 1e-9);
    }
}

#[test]
fn bayescg_objective_survives_serialization() {
    let d = FiniteDistribution::random(3, 12, 77).unwrap();
    let sample = d.sample(600, 77).unwrap();
    let sm = SmoothedMetric::new(MetricId::QMean, 0.01).unwrap();
    let cfg = CgConfig {
        iterations: 150,
        seed: 77,
        ..Default::default()
    };
    let res = bayescg(&sample, &sm, &cfg, &CpeSource::default()).unwrap();
    let (_, s2) = SplitConfig {
        alpha: cfg.alpha,
        seed: cfg.seed,
    }
    .split(&sample)
    .unwrap();
    let back = ClassifierRule::from_json(&res.ensemble.to_json().unwrap()).unwrap();
    let again = eval_smoothed(&sm, &empirical_conf(&back, &s2).unwrap()).unwrap();
    assert!(
        (again - res.objective).abs() <= 1e-12,
        "{again} vs {}",
        res.objective
    );
}

#[test]
fn degenerate_gradient_picks_larger_class() {
    let d = FiniteDistribution::random(3, 4, 5).unwrap();
    let rule =
        nondecomp::exact_linear_max(&nondecomp::GainMatrix::new(3, vec![0.2; 9]).unwrap(), &d);
    for p in d.points() {
        assert_eq!(rule.predict(&p.x).unwrap().as_slice(), &[0.0, 0.0, 1.0]);
    }
}
