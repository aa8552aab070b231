//! Class-probability estimation: L2-regularized multinomial logistic
//! regression fit by full-batch gradient descent, plus oracle scorers that
//! return the true conditional of a synthetic distribution.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::confusion::{ClassDistribution, LabeledSample};
use crate::error::{Error, Result};
use crate::synth::{softmax_of_logs, FiniteDistribution, GaussianMixtureSpec};

#[derive(Deserialize)]
struct RawModel {
    n: usize,
    d: usize,
    weights: Vec<f64>,
}

/// Affine softmax model; `weights` is row-major `n × (d + 1)` with the bias in
/// the last column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct CpeModel {
    n: usize,
    d: usize,
    weights: Vec<f64>,
}

impl TryFrom<RawModel> for CpeModel {
    type Error = Error;
    fn try_from(r: RawModel) -> Result<Self> {
        Self::new(r.n, r.d, r.weights)
    }
}

impl CpeModel {
    pub fn new(n: usize, d: usize, weights: Vec<f64>) -> Result<Self> {
        crate::confusion::check_class_count(n)?;
        if weights.len() != n * (d + 1) {
            return Err(Error::DimensionMismatch {
                expected: n * (d + 1),
                got: weights.len(),
            });
        }
        if let Some(k) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite {
                row: k / (d + 1),
                col: k % (d + 1),
            });
        }
        Ok(Self { n, d, weights })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            weights: vec![0.0; n * (d + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn scores_into(&self, x: &[f64], out: &mut [f64]) {
        let w = self.d + 1;
        for (y, o) in out.iter_mut().enumerate() {
            let row = &self.weights[y * w..(y + 1) * w];
            *o = row[self.d] + row[..self.d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn eta(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut s = vec![0.0; self.n];
        self.scores_into(x, &mut s);
        Ok(softmax_of_logs(&s))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<ClassDistribution> {
        self.eta(x).map(ClassDistribution::from_vec_unchecked)
    }
}

/// Softmax of per-class affine scores.
pub fn predict_proba(model: &CpeModel, x: &[f64]) -> Result<ClassDistribution> {
    model.predict_proba(x)
}

/// Optimizer settings for [`train_cpe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpeTrainConfig {
    pub l2_penalty: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub initial_step: f64,
    pub shrink: f64,
    pub armijo_c: f64,
}

impl Default for CpeTrainConfig {
    fn default() -> Self {
        Self {
            l2_penalty: 1e-4,
            max_iters: 5000,
            grad_tol: 1e-6,
            initial_step: 1.0,
            shrink: 0.5,
            armijo_c: 1e-4,
        }
    }
}

impl CpeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return bad("l2_penalty must be >= 0");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        if self.grad_tol.is_nan() || self.grad_tol <= 0.0 {
            return bad("grad_tol must be > 0");
        }
        if self.initial_step.is_nan() || self.initial_step <= 0.0 {
            return bad("initial_step must be > 0");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0,1)");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0,1)");
        }
        Ok(())
    }
}

/// Summary of an optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub iterations: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub converged: bool,
    /// Objective after each accepted step, starting from the zero model.
    pub history: Vec<f64>,
}

/// Regularized mean negative log-likelihood; the bias column is not penalized.
pub fn training_objective(model: &CpeModel, sample: &LabeledSample, l2_penalty: f64) -> f64 {
    objective_and_grad(model, sample, l2_penalty, false).0
}

fn objective_and_grad(
    model: &CpeModel,
    sample: &LabeledSample,
    lambda: f64,
    want_grad: bool,
) -> (f64, Vec<f64>) {
    let (n, d) = (model.n, model.d);
    let w = d + 1;
    let mut grad = if want_grad {
        vec![0.0; n * w]
    } else {
        Vec::new()
    };
    let mut scores = vec![0.0; n];
    let mut loss = 0.0;
    for (x, y) in sample.rows() {
        model.scores_into(x, &mut scores);
        let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
        let lse = mx + z.ln();
        loss += lse - scores[y];
        if want_grad {
            for c in 0..n {
                let p = (scores[c] - lse).exp() - if c == y { 1.0 } else { 0.0 };
                let g = &mut grad[c * w..(c + 1) * w];
                for (gk, xk) in g[..d].iter_mut().zip(x) {
                    *gk += p * xk;
                }
                g[d] += p;
            }
        }
    }
    let m = sample.len() as f64;
    loss /= m;
    let mut reg = 0.0;
    for c in 0..n {
        for k in 0..d {
            let v = model.weights[c * w + k];
            reg += v * v;
        }
    }
    loss += 0.5 * lambda * reg;
    if want_grad {
        for c in 0..n {
            for k in 0..w {
                let g = &mut grad[c * w + k];
                *g /= m;
                if k < d {
                    *g += lambda * model.weights[c * w + k];
                }
            }
        }
    }
    (loss, grad)
}

/// Fits a model on `sample`; see [`train_cpe_with_report`].
pub fn train_cpe(sample: &LabeledSample, config: &CpeTrainConfig) -> Result<CpeModel> {
    train_cpe_with_report(sample, config).map(|(m, _)| m)
}

/// Gradient descent from the zero model with Armijo backtracking. Each search
/// starts from twice the previously accepted step, capped at `initial_step`
/// times 2^20.
pub fn train_cpe_with_report(
    sample: &LabeledSample,
    config: &CpeTrainConfig,
) -> Result<(CpeModel, TrainReport)> {
    config.validate()?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if sample.d() == 0 {
        return Err(Error::InvalidParameter(
            "feature dimension must be >= 1".into(),
        ));
    }
    let lambda = config.l2_penalty;
    let mut model = CpeModel::zeros(sample.n(), sample.d());
    let (mut f, mut g) = objective_and_grad(&model, sample, lambda, true);
    let mut history = vec![f];
    let mut step = config.initial_step;
    let max_step = config.initial_step * f64::powi(2.0, 20);
    let mut iterations = 0;
    let mut gnorm = l2(&g);
    while iterations < config.max_iters && gnorm > config.grad_tol {
        let g2 = gnorm * gnorm;
        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = model
                .weights
                .iter()
                .zip(&g)
                .map(|(w, gi)| w - t * gi)
                .collect();
            let cand = CpeModel {
                weights: trial,
                ..model.clone()
            };
            let f_new = objective_and_grad(&cand, sample, lambda, false).0;
            if f_new.is_finite() && f_new <= f - config.armijo_c * t * g2 {
                accepted = Some((cand, f_new));
                break;
            }
            t *= config.shrink;
        }
        let Some((cand, f_new)) = accepted else {
            break;
        };
        model = cand;
        iterations += 1;
        let (fv, gv) = objective_and_grad(&model, sample, lambda, true);
        debug_assert!((fv - f_new).abs() <= 1e-12 * fv.abs().max(1.0));
        f = fv;
        g = gv;
        gnorm = l2(&g);
        history.push(f);
        step = (2.0 * t).min(max_step);
    }
    let report = TrainReport {
        iterations,
        objective: f,
        grad_norm: gnorm,
        converged: gnorm <= config.grad_tol,
        history,
    };
    Ok((model, report))
}

/// Trains on standardized features and folds the affine transform back into
/// the weights, so the returned model consumes raw features.
pub fn train_cpe_standardized(sample: &LabeledSample, config: &CpeTrainConfig) -> Result<CpeModel> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let d = sample.d();
    let m = sample.len() as f64;
    let mut mean = vec![0.0; d];
    for x in sample.features() {
        for (a, b) in mean.iter_mut().zip(x) {
            *a += b / m;
        }
    }
    let mut scale = vec![0.0; d];
    for x in sample.features() {
        for ((s, b), mu) in scale.iter_mut().zip(x).zip(&mean) {
            *s += (b - mu).powi(2) / m;
        }
    }
    scale.iter_mut().for_each(|s| {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    });
    let feats: Vec<Vec<f64>> = sample
        .features()
        .iter()
        .map(|x| {
            x.iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, mu), s)| (v - mu) / s)
                .collect()
        })
        .collect();
    let std_sample = LabeledSample::new(sample.n(), feats, sample.labels().to_vec())?;
    let fitted = train_cpe(&std_sample, config)?;
    let w = d + 1;
    let mut weights = fitted.weights.clone();
    for c in 0..sample.n() {
        let row = &mut weights[c * w..(c + 1) * w];
        let mut bias = row[d];
        for k in 0..d {
            row[k] /= scale[k];
            bias -= row[k] * mean[k];
        }
        row[d] = bias;
    }
    CpeModel::new(sample.n(), d, weights)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// True conditional of a synthetic distribution, used as a perfect CPE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "oracle", rename_all = "snake_case")]
pub enum OracleEta {
    /// Exact feature match against the support points.
    Finite {
        dist: FiniteDistribution,
    },
    Gaussian {
        spec: GaussianMixtureSpec,
    },
}

/// A class-probability function `η̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scorer {
    Logistic(CpeModel),
    Oracle(OracleEta),
}

impl Scorer {
    pub fn finite_oracle(dist: FiniteDistribution) -> Self {
        Self::Oracle(OracleEta::Finite { dist })
    }

    pub fn gaussian_oracle(spec: GaussianMixtureSpec) -> Self {
        Self::Oracle(OracleEta::Gaussian { spec })
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Logistic(m) => m.n(),
            Self::Oracle(OracleEta::Finite { dist }) => dist.n(),
            Self::Oracle(OracleEta::Gaussian { spec }) => spec.n(),
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Self::Logistic(m) => m.d(),
            Self::Oracle(OracleEta::Finite { dist }) => dist.d(),
            Self::Oracle(OracleEta::Gaussian { spec }) => spec.d(),
        }
    }

    pub fn eta(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Logistic(m) => m.eta(x),
            Self::Oracle(OracleEta::Finite { dist }) => {
                dist.eta_at(x).map(|e| e.as_slice().to_vec())
            }
            Self::Oracle(OracleEta::Gaussian { spec }) => spec.eta(x),
        }
    }
}

/// Where a plug-in learner gets `η̂` from.
#[derive(Debug, Clone)]
pub enum CpeSource {
    /// Fit logistic regression on the first split.
    Train(CpeTrainConfig),
    /// Same, on standardized features.
    TrainStandardized(CpeTrainConfig),
    /// Use the given scorer and ignore the first split.
    Fixed(Arc<Scorer>),
}

impl Default for CpeSource {
    fn default() -> Self {
        Self::Train(CpeTrainConfig::default())
    }
}

impl CpeSource {
    pub fn fit(&self, sample: &LabeledSample) -> Result<Arc<Scorer>> {
        match self {
            Self::Train(cfg) => Ok(Arc::new(Scorer::Logistic(train_cpe(sample, cfg)?))),
            Self::TrainStandardized(cfg) => Ok(Arc::new(Scorer::Logistic(train_cpe_standardized(
                sample, cfg,
            )?))),
            Self::Fixed(s) => {
                if s.n() != sample.n() {
                    return Err(Error::DimensionMismatch {
                        expected: sample.n(),
                        got: s.n(),
                    });
                }
                Ok(Arc::clone(s))
            }
        }
    }
}

/// `Σ_k q_k ‖η̂(x_k) − η_k‖₁`.
pub fn l1_calibration_error(scorer: &Scorer, dist: &FiniteDistribution) -> Result<f64> {
    let mut total = 0.0;
    for p in dist.points() {
        let e = scorer.eta(&p.x)?;
        total += p.q * p.eta.l1_distance(&e);
    }
    Ok(total)
}

/// Monte Carlo estimate of `E_X ‖η̂(X) − η(X)‖₁` under a Gaussian mixture.
pub fn l1_calibration_error_mc(
    scorer: &Scorer,
    spec: &GaussianMixtureSpec,
    m: usize,
    seed: u64,
) -> Result<f64> {
    let s = spec.sample(m, seed)?;
    let mut total = 0.0;
    for x in s.features() {
        let a = scorer.eta(x)?;
        let b = spec.eta(x)?;
        total += a.iter().zip(&b).map(|(u, v)| (u - v).abs()).sum::<f64>();
    }
    Ok(total / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::rng_from_seed;
    use rand::Rng;

    fn sep_sample() -> LabeledSample {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 - 19.5) / 10.0]).collect();
        let ys = (0..40).map(|i| usize::from(i >= 20)).collect();
        LabeledSample::new(2, xs, ys).unwrap()
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = CpeModel::zeros(4, 3);
        assert_eq!(
            m.predict_proba(&[1.0, -2.0, 3.0]).unwrap().as_slice(),
            &[0.25; 4]
        );
    }

    #[test]
    fn bias_shift_invariance() {
        let mut m = CpeModel::new(3, 1, vec![0.3, 0.1, -1.2, 0.4, 0.5, -0.7]).unwrap();
        let before = m.eta(&[0.8]).unwrap();
        for c in 0..3 {
            m.weights[c * 2 + 1] += 5.0;
        }
        let after = m.eta(&[0.8]).unwrap();
        for (a, b) in before.iter().zip(after) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn binary_softmax_is_logistic() {
        let m = CpeModel::new(2, 1, vec![0.5, -0.2, 1.5, 0.3]).unwrap();
        let x = 0.7;
        let s = (1.5 * x + 0.3) - (0.5 * x - 0.2);
        let p = m.eta(&[x]).unwrap();
        assert!((p[1] - 1.0 / (1.0 + (-s).exp())).abs() < 1e-15);
    }

    #[test]
    fn extreme_scores_stay_normalized() {
        let m = CpeModel::new(3, 1, vec![800.0, 0.0, -800.0, 0.0, 1.0, 0.0]).unwrap();
        let p = m.eta(&[10.0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(CpeModel::zeros(2, 2).eta(&[1.0]).is_err());
    }

    #[test]
    fn training_beats_zero_model() {
        let s = sep_sample();
        let cfg = CpeTrainConfig {
            l2_penalty: 0.1,
            ..Default::default()
        };
        let (m, rep) = train_cpe_with_report(&s, &cfg).unwrap();
        let zero = training_objective(&CpeModel::zeros(2, 1), &s, 0.1);
        assert!(training_objective(&m, &s, 0.1) < zero);
        assert!(rep.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(rep.converged);
    }

    #[test]
    fn heavy_penalty_recovers_priors() {
        let mut rng = rng_from_seed(5);
        let xs: Vec<Vec<f64>> = (0..300)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let ys: Vec<usize> = (0..300).map(|_| rng.random_range(0..3)).collect();
        let s = LabeledSample::new(3, xs, ys).unwrap();
        let cfg = CpeTrainConfig {
            l2_penalty: 100.0,
            ..Default::default()
        };
        let m = train_cpe(&s, &cfg).unwrap();
        let pri = s.priors();
        let p = m.eta(&[0.3, -0.4]).unwrap();
        let dist: f64 = p.iter().zip(&pri).map(|(a, b)| (a - b).abs()).sum();
        assert!(dist <= 0.05, "{dist}");
    }

    #[test]
    fn more_iterations_never_hurt() {
        let s = sep_sample();
        let mut prev = f64::INFINITY;
        for iters in [1, 2, 4, 8, 16, 32] {
            let cfg = CpeTrainConfig {
                max_iters: iters,
                ..Default::default()
            };
            let (_, rep) = train_cpe_with_report(&s, &cfg).unwrap();
            assert!(rep.objective <= prev);
            prev = rep.objective;
        }
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let s = sep_sample();
        let cfg = CpeTrainConfig::default();
        assert_eq!(train_cpe(&s, &cfg).unwrap(), train_cpe(&s, &cfg).unwrap());
    }

    #[test]
    fn standardized_model_consumes_raw_features() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![1000.0 + i as f64]).collect();
        let ys = (0..40).map(|i| usize::from(i >= 20)).collect();
        let s = LabeledSample::new(2, xs, ys).unwrap();
        let m = train_cpe_standardized(&s, &CpeTrainConfig::default()).unwrap();
        assert!(m.eta(&[1002.0]).unwrap()[0] > 0.9);
        assert!(m.eta(&[1037.0]).unwrap()[1] > 0.9);
    }

    #[test]
    fn calibration_error_examples() {
        let d = FiniteDistribution::from_masses(
            vec![0.5, 0.5],
            vec![ClassDistribution::one_hot(2, 0); 2],
        )
        .unwrap();
        let uniform = Scorer::Logistic(CpeModel::zeros(2, 2));
        assert!((l1_calibration_error(&uniform, &d).unwrap() - 1.0).abs() < 1e-15);
        let oracle = Scorer::finite_oracle(d.clone());
        assert_eq!(l1_calibration_error(&oracle, &d).unwrap(), 0.0);
    }

    #[test]
    fn trained_model_beats_uniform_calibration() {
        let d = FiniteDistribution::random(3, 5, 21).unwrap();
        let s = d.sample(2000, 1).unwrap();
        let m = Scorer::Logistic(train_cpe(&s, &CpeTrainConfig::default()).unwrap());
        let u = Scorer::Logistic(CpeModel::zeros(3, 5));
        assert!(l1_calibration_error(&m, &d).unwrap() < l1_calibration_error(&u, &d).unwrap());
    }

    #[test]
    fn scorer_json_forms() {
        let m = Scorer::Logistic(CpeModel::zeros(2, 1));
        let j = serde_json::to_string(&m).unwrap();
        assert_eq!(j, r#"{"n":2,"d":1,"weights":[0.0,0.0,0.0,0.0]}"#);
        assert_eq!(serde_json::from_str::<Scorer>(&j).unwrap(), m);
        let o = Scorer::finite_oracle(FiniteDistribution::coin_flip());
        let j = serde_json::to_string(&o).unwrap();
        assert!(j.starts_with(r#"{"oracle":"finite""#));
        assert_eq!(serde_json::from_str::<Scorer>(&j).unwrap(), o);
    }
}
