//! Plug-in learners: weighted-argmax classifiers over a class-probability
//! estimate, the binary threshold search and the brute-force gain search.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::confusion::{ConfusionMatrix, GainMatrix, LabeledSample};
use crate::cpe::{CpeSource, Scorer};
use crate::error::{Error, Result};
use crate::metrics::{MetricId, MetricSpec};
use crate::rule::ClassifierRule;
use crate::synth::{rng_from_seed, FiniteDistribution};

/// Train/tune split: `|S''| = ⌈αm⌉`, `|S'| = m − |S''|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub alpha: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn sizes(&self, m: usize) -> Result<(usize, usize)> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha = {} outside (0,1)",
                self.alpha
            )));
        }
        let a = self.alpha * m as f64;
        let m2 = if (a - a.round()).abs() < 1e-9 {
            a.round() as usize
        } else {
            a.ceil() as usize
        };
        let m1 = m.saturating_sub(m2);
        if m1 == 0 || m2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "split of {m} rows with alpha = {} leaves an empty part",
                self.alpha
            )));
        }
        Ok((m1, m2))
    }

    /// Seeded shuffle, then the first `|S'|` rows train the CPE and the rest
    /// form the tuning split.
    pub fn split(&self, sample: &LabeledSample) -> Result<(LabeledSample, LabeledSample)> {
        let (m1, _) = self.sizes(sample.len())?;
        let mut idx: Vec<usize> = (0..sample.len()).collect();
        idx.shuffle(&mut rng_from_seed(self.seed));
        Ok((sample.subset(&idx[..m1])?, sample.subset(&idx[m1..])?))
    }
}

/// Evaluation set for rules that depend on `x` only through `η̂(x)`.
///
/// Rows with bitwise-identical `η̂` are merged. Each row carries per-class
/// label mass: `e_y / m` for a sample row, `q_k η_k` for a support point.
#[derive(Debug, Clone)]
pub struct TuningSet {
    n: usize,
    etas: Vec<Vec<f64>>,
    masses: Vec<Vec<f64>>,
}

impl TuningSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.etas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.etas.is_empty()
    }

    pub fn etas(&self) -> &[Vec<f64>] {
        &self.etas
    }

    pub fn masses(&self) -> &[Vec<f64>] {
        &self.masses
    }

    fn build<I>(n: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = Result<(Vec<f64>, Vec<f64>)>>,
    {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut etas = Vec::new();
        let mut masses: Vec<Vec<f64>> = Vec::new();
        for row in rows {
            let (eta, mass) = row?;
            if eta.len() != n || mass.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: eta.len().min(mass.len()),
                });
            }
            let key: Vec<u64> = eta.iter().map(|v| v.to_bits()).collect();
            match index.get(&key) {
                Some(&k) => {
                    for (a, b) in masses[k].iter_mut().zip(&mass) {
                        *a += b;
                    }
                }
                None => {
                    index.insert(key, etas.len());
                    etas.push(eta);
                    masses.push(mass);
                }
            }
        }
        if etas.is_empty() {
            return Err(Error::EmptySample);
        }
        Ok(Self { n, etas, masses })
    }

    /// Empirical distribution of `sample` scored by `scorer`.
    pub fn from_sample(sample: &LabeledSample, scorer: &Scorer) -> Result<Self> {
        let n = sample.n();
        check_scorer(scorer, n)?;
        let w = 1.0 / sample.len() as f64;
        Self::build(
            n,
            sample.rows().map(|(x, y)| {
                let mut mass = vec![0.0; n];
                mass[y] = w;
                Ok((scorer.eta(x)?, mass))
            }),
        )
    }

    /// Exact distribution over the support points, scored by `scorer`.
    pub fn from_distribution(dist: &FiniteDistribution, scorer: &Scorer) -> Result<Self> {
        let n = dist.n();
        check_scorer(scorer, n)?;
        Self::build(
            n,
            dist.points().iter().map(|p| {
                let mass = p.eta.as_slice().iter().map(|e| p.q * e).collect();
                Ok((scorer.eta(&p.x)?, mass))
            }),
        )
    }

    /// Feature vectors with caller-supplied label masses. Masses must be
    /// nonnegative and sum to 1 overall.
    pub fn from_features(xs: &[Vec<f64>], masses: Vec<Vec<f64>>, scorer: &Scorer) -> Result<Self> {
        if xs.len() != masses.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                got: masses.len(),
            });
        }
        let n = scorer.n();
        let total: f64 = masses.iter().flatten().sum();
        if (total - 1.0).abs() > 1e-9 || masses.iter().flatten().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "label masses must be nonnegative and sum to 1 (sum {total})"
            )));
        }
        Self::build(
            n,
            xs.iter().zip(masses).map(|(x, m)| Ok((scorer.eta(x)?, m))),
        )
    }

    pub fn priors(&self) -> Vec<f64> {
        let mut pi = vec![0.0; self.n];
        for m in &self.masses {
            for (p, v) in pi.iter_mut().zip(m) {
                *p += v;
            }
        }
        pi
    }

    /// Confusion of the deterministic rule assigning row `k` to `pred(k)`.
    pub fn conf_of_assignment(&self, pred: impl Fn(usize) -> usize) -> ConfusionMatrix {
        let n = self.n;
        let mut e = vec![0.0; n * n];
        for (k, m) in self.masses.iter().enumerate() {
            let j = pred(k);
            for (i, v) in m.iter().enumerate() {
                e[i * n + j] += v;
            }
        }
        ConfusionMatrix::from_parts_unchecked(n, e)
    }

    /// Confusion of the weighted-argmax rule with gain `g`.
    pub fn conf_of_gain(&self, g: &GainMatrix) -> ConfusionMatrix {
        self.conf_of_assignment(|k| g.argmax_column(&self.etas[k]))
    }

    /// Confusion of the binary threshold rule `η̂₂ > t`.
    pub fn conf_of_threshold(&self, t: f64) -> ConfusionMatrix {
        self.conf_of_assignment(|k| usize::from(self.etas[k][1] > t))
    }

    /// Confusion of a constant output distribution.
    pub fn conf_of_constant(&self, h: &[f64]) -> ConfusionMatrix {
        let n = self.n;
        let pi = self.priors();
        let mut e = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                e[i * n + j] = pi[i] * h[j];
            }
        }
        ConfusionMatrix::from_parts_unchecked(n, e)
    }

    /// Confusion of any rule built from weighted-argmax, threshold and
    /// constant pieces.
    pub fn conf_of_rule(&self, rule: &ClassifierRule) -> Result<ConfusionMatrix> {
        if rule.n_classes() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: rule.n_classes(),
            });
        }
        Ok(match rule {
            ClassifierRule::WeightedArgmax { gain, .. } => self.conf_of_gain(gain),
            ClassifierRule::BinaryThreshold { t, .. } => self.conf_of_threshold(*t),
            ClassifierRule::Constant { dist } => self.conf_of_constant(dist.as_slice()),
            ClassifierRule::Mixture {
                weights,
                components,
                ..
            } => {
                let n = self.n;
                let mut e = vec![0.0; n * n];
                for (w, c) in weights.iter().zip(components) {
                    let cc = self.conf_of_rule(c)?;
                    for (a, b) in e.iter_mut().zip(cc.entries()) {
                        *a += w * b;
                    }
                }
                ConfusionMatrix::from_parts_unchecked(n, e)
            }
        })
    }
}

fn check_scorer(scorer: &Scorer, n: usize) -> Result<()> {
    if scorer.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: scorer.n(),
        });
    }
    Ok(())
}

/// Deterministic rule predicting `argmax_y g_yᵀ η̂(x)`, ties to the larger index.
pub fn weighted_argmax_classifier(g: GainMatrix, scorer: Arc<Scorer>) -> ClassifierRule {
    ClassifierRule::weighted_argmax(g, scorer)
}

fn score(metric: &MetricSpec, c: &ConfusionMatrix) -> f64 {
    metric.eval(c).unwrap_or(f64::NEG_INFINITY)
}

/// Candidate thresholds: 0, 1 and midpoints of consecutive distinct `η̂₂`
/// values, ascending.
pub fn threshold_candidates(tuning: &TuningSet) -> Vec<f64> {
    let mut v: Vec<f64> = tuning.etas().iter().map(|e| e[1]).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let mut c = Vec::with_capacity(v.len() + 1);
    c.push(0.0);
    c.extend(v.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    c.push(1.0);
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Best threshold on a tuning set; ties go to the smaller threshold.
/// Returns `(t, metric value)`.
pub fn binary_threshold_search(tuning: &TuningSet, metric: &MetricSpec) -> Result<(f64, f64)> {
    if tuning.n() != 2 {
        return Err(Error::RequiresBinary {
            metric: "binary threshold search".into(),
            n: tuning.n(),
        });
    }
    metric.check_n(2)?;
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for t in threshold_candidates(tuning) {
        let v = score(metric, &tuning.conf_of_threshold(t));
        if v > best.1 || best.0.is_nan() {
            best = (t, v);
        }
    }
    Ok(best)
}

/// Splits the sample, fits `η̂` on the first part and picks the threshold
/// maximizing the empirical metric on the tuning part.
pub fn binary_threshold_plugin(
    sample: &LabeledSample,
    metric: MetricId,
    split: &SplitConfig,
    cpe: &CpeSource,
) -> Result<(ClassifierRule, f64)> {
    if sample.n() != 2 {
        return Err(Error::RequiresBinary {
            metric: format!("binary-plugin with {metric}"),
            n: sample.n(),
        });
    }
    let (s1, s2) = split.split(sample)?;
    let scorer = cpe.fit(&s1)?;
    let tuning = TuningSet::from_sample(&s2, &scorer)?;
    let (t, _) = binary_threshold_search(&tuning, &MetricSpec::Plain(metric))?;
    Ok((ClassifierRule::BinaryThreshold { t, cpe: scorer }, t))
}

/// Gain-matrix candidate generation for the brute-force search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainGridConfig {
    pub per_entry_levels: usize,
    pub max_candidates: usize,
    pub seed: u64,
}

impl Default for GainGridConfig {
    fn default() -> Self {
        Self {
            per_entry_levels: 5,
            max_candidates: 20_000,
            seed: 0,
        }
    }
}

/// Candidate gain matrices: identity first, then either the full grid over
/// `[−1, 1]` per entry or, when that exceeds `max_candidates`, seeded uniform
/// random matrices. Diagonal entries are kept nonnegative for monotone metrics.
pub fn gain_candidates(n: usize, monotone: bool, cfg: &GainGridConfig) -> Result<Vec<GainMatrix>> {
    let l = cfg.per_entry_levels;
    if l < 2 {
        return Err(Error::InvalidParameter(
            "per_entry_levels must be >= 2".into(),
        ));
    }
    if cfg.max_candidates == 0 {
        return Err(Error::InvalidParameter(
            "max_candidates must be >= 1".into(),
        ));
    }
    let values: Vec<f64> = (0..l)
        .map(|i| -1.0 + 2.0 * i as f64 / (l - 1) as f64)
        .collect();
    let diag_values: Vec<f64> = if monotone {
        values.iter().copied().filter(|v| *v >= 0.0).collect()
    } else {
        values.clone()
    };
    let grid_size =
        (diag_values.len() as f64).powi(n as i32) * (values.len() as f64).powi((n * n - n) as i32);
    let mut out = vec![GainMatrix::identity(n)];
    if grid_size + 1.0 <= cfg.max_candidates as f64 {
        let total = grid_size as usize;
        for mut code in 0..total {
            let mut e = vec![0.0; n * n];
            for (k, slot) in e.iter_mut().enumerate() {
                let vs = if k / n == k % n {
                    &diag_values
                } else {
                    &values
                };
                *slot = vs[code % vs.len()];
                code /= vs.len();
            }
            out.push(GainMatrix::from_parts_unchecked(n, e));
        }
    } else {
        let mut rng = rng_from_seed(cfg.seed);
        while out.len() < cfg.max_candidates {
            let e = (0..n * n)
                .map(|k| {
                    let v: f64 = rng.random_range(-1.0..=1.0);
                    if monotone && k / n == k % n {
                        v.abs()
                    } else {
                        v
                    }
                })
                .collect();
            out.push(GainMatrix::from_parts_unchecked(n, e));
        }
    }
    Ok(out)
}

/// Best candidate on a tuning set; ties keep the earliest candidate.
/// Returns `(gain, metric value)`.
pub fn gain_search(
    tuning: &TuningSet,
    metric: &MetricSpec,
    grid: &GainGridConfig,
) -> Result<(GainMatrix, f64)> {
    metric.check_n(tuning.n())?;
    let cands = gain_candidates(tuning.n(), metric.base().is_monotone(), grid)?;
    let mut best: Option<(usize, f64)> = None;
    for (k, g) in cands.iter().enumerate() {
        let v = score(metric, &tuning.conf_of_gain(g));
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((k, v));
        }
    }
    let (k, v) = best.expect("identity is always a candidate");
    Ok((cands[k].clone(), v))
}

/// Splits the sample, fits `η̂` on the first part and picks the gain matrix
/// whose plug-in classifier maximizes the empirical metric on the tuning part.
pub fn brute_force_plugin(
    sample: &LabeledSample,
    metric: &MetricSpec,
    split: &SplitConfig,
    grid: &GainGridConfig,
    cpe: &CpeSource,
) -> Result<(ClassifierRule, GainMatrix)> {
    metric.check_n(sample.n())?;
    let (s1, s2) = split.split(sample)?;
    let scorer = cpe.fit(&s1)?;
    let tuning = TuningSet::from_sample(&s2, &scorer)?;
    let (g, _) = gain_search(&tuning, metric, grid)?;
    Ok((weighted_argmax_classifier(g.clone(), scorer), g))
}
