use nondecomp::cpe::{l1_calibration_error, l1_calibration_error_mc, train_cpe};
use nondecomp::synth::{FiniteDistribution, GaussianMixtureSpec};
use nondecomp::{ClassDistribution, CpeModel, CpeTrainConfig, Scorer};
use proptest::prelude::*;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn probabilities_sum_to_one(
        weights in prop::collection::vec(-1e3f64..1e3, 9),
        x in prop::collection::vec(-1e3f64..1e3, 2),
    ) {
        let model = CpeModel::new(3, 2, weights).unwrap();
        let p = model.eta(&x).unwrap();
        prop_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn training_is_bitwise_deterministic() {
    let s = GaussianMixtureSpec::default().sample(400, 3).unwrap();
    let a = train_cpe(&s, &CpeTrainConfig::default()).unwrap();
    let b = train_cpe(&s, &CpeTrainConfig::default()).unwrap();
    let bits = |m: &CpeModel| m.weights().iter().map(|w| w.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

/// A 3-class distribution over 8 one-hot feature vectors, where a linear
/// softmax can represent the conditional exactly.
fn informative_dist() -> FiniteDistribution {
    let etas = [
        [0.8, 0.1, 0.1],
        [0.1, 0.8, 0.1],
        [0.1, 0.1, 0.8],
        [0.5, 0.4, 0.1],
        [0.2, 0.3, 0.5],
        [0.6, 0.2, 0.2],
        [0.3, 0.6, 0.1],
        [0.15, 0.15, 0.7],
    ];
    FiniteDistribution::from_masses(
        vec![0.125; 8],
        etas.iter()
            .map(|e| ClassDistribution::new(e.to_vec()).unwrap())
            .collect(),
    )
    .unwrap()
}

#[test]
fn calibration_improves_with_data_on_finite_support() {
    let d = informative_dist();
    let meds: Vec<f64> = [200usize, 800, 3200]
        .iter()
        .map(|&m| {
            median(
                (0..10u64)
                    .map(|seed| {
                        let s = d.sample(m, 50 + seed).unwrap();
                        let model = train_cpe(&s, &CpeTrainConfig::default()).unwrap();
                        l1_calibration_error(&Scorer::Logistic(model), &d).unwrap()
                    })
                    .collect(),
            )
        })
        .collect();
    assert!(
        meds[1] <= 1.1 * meds[0] && meds[2] <= 1.1 * meds[1],
        "{meds:?}"
    );
}

#[test]
fn trained_model_beats_uniform_baseline() {
    let d = informative_dist();
    let s = d.sample(2000, 9).unwrap();
    let trained = Scorer::Logistic(train_cpe(&s, &CpeTrainConfig::default()).unwrap());
    let uniform = Scorer::Logistic(CpeModel::zeros(3, d.d()));
    assert!(
        l1_calibration_error(&trained, &d).unwrap() < l1_calibration_error(&uniform, &d).unwrap()
    );
}

#[test]
fn gaussian_cpe_error_decreases_with_m() {
    let spec = GaussianMixtureSpec::default();
    let meds: Vec<f64> = [500usize, 2000, 8000]
        .iter()
        .map(|&m| {
            median(
                (0..10u64)
                    .map(|seed| {
                        let s = spec.sample(m, 70 + seed).unwrap();
                        let model = train_cpe(&s, &CpeTrainConfig::default()).unwrap();
                        l1_calibration_error_mc(&Scorer::Logistic(model), &spec, 20_000, 777)
                            .unwrap()
                    })
                    .collect(),
            )
        })
        .collect();
    assert!(meds[0] > meds[1] && meds[1] > meds[2], "{meds:?}");
}
