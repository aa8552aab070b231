//! Classifier rules: weighted-argmax plug-ins, binary thresholds, constant
//! predictors and flat mixture ensembles.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::confusion::{ClassDistribution, GainMatrix, SIMPLEX_TOL};
use crate::cpe::Scorer;
use crate::error::{Error, Result};

/// Provenance attached to ensembles produced by the conditional-gradient
/// learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    #[serde(rename = "T")]
    pub iterations: usize,
    pub rho: f64,
    pub metric: String,
    pub seed: u64,
}

/// A (possibly randomized) map from feature vectors to label distributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierRule {
    /// Predicts `argmax_j g_jᵀ η̂(x)`, ties to the larger index.
    WeightedArgmax {
        gain: GainMatrix,
        cpe: Arc<Scorer>,
    },
    /// Binary rule: class 2 when `η̂₂(x) > t`, class 1 otherwise.
    BinaryThreshold {
        t: f64,
        cpe: Arc<Scorer>,
    },
    Constant {
        dist: ClassDistribution,
    },
    /// Flat convex combination of non-mixture rules.
    Mixture {
        weights: Vec<f64>,
        components: Vec<ClassifierRule>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        meta: Option<EnsembleMeta>,
    },
}

impl ClassifierRule {
    pub fn constant(dist: ClassDistribution) -> Self {
        Self::Constant { dist }
    }

    pub fn weighted_argmax(gain: GainMatrix, scorer: Arc<Scorer>) -> Self {
        Self::WeightedArgmax { gain, cpe: scorer }
    }

    /// Builds a mixture, flattening nested mixtures into a single level and
    /// dropping zero-weight components.
    pub fn mixture(weights: Vec<f64>, components: Vec<ClassifierRule>) -> Result<Self> {
        if weights.len() != components.len() || components.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        check_weights(&weights)?;
        let n = components[0].n_classes();
        let mut flat_w = Vec::with_capacity(weights.len());
        let mut flat_c = Vec::with_capacity(components.len());
        for (w, c) in weights.into_iter().zip(components) {
            if c.n_classes() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.n_classes(),
                });
            }
            match c {
                ClassifierRule::Mixture {
                    weights: inner_w,
                    components: inner_c,
                    ..
                } => {
                    for (iw, ic) in inner_w.into_iter().zip(inner_c) {
                        if w * iw > 0.0 {
                            flat_w.push(w * iw);
                            flat_c.push(ic);
                        }
                    }
                }
                other => {
                    if w > 0.0 {
                        flat_w.push(w);
                        flat_c.push(other);
                    }
                }
            }
        }
        Ok(Self::Mixture {
            weights: flat_w,
            components: flat_c,
            meta: None,
        })
    }

    pub fn with_meta(mut self, new_meta: EnsembleMeta) -> Self {
        if let Self::Mixture { meta, .. } = &mut self {
            *meta = Some(new_meta);
        }
        self
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Self::WeightedArgmax { gain, .. } => gain.n(),
            Self::BinaryThreshold { .. } => 2,
            Self::Constant { dist } => dist.n(),
            Self::Mixture { components, .. } => components.first().map_or(0, |c| c.n_classes()),
        }
    }

    /// Checks weights, class counts and flatness.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::WeightedArgmax { gain, cpe } => {
                if cpe.n() != gain.n() {
                    return Err(Error::DimensionMismatch {
                        expected: gain.n(),
                        got: cpe.n(),
                    });
                }
            }
            Self::BinaryThreshold { t, cpe } => {
                if cpe.n() != 2 {
                    return Err(Error::RequiresBinary {
                        metric: "binary_threshold".into(),
                        n: cpe.n(),
                    });
                }
                if !t.is_finite() {
                    return Err(Error::InvalidParameter(format!("threshold {t}")));
                }
            }
            Self::Constant { .. } => {}
            Self::Mixture {
                weights,
                components,
                ..
            } => {
                if weights.len() != components.len() || components.is_empty() {
                    return Err(Error::InvalidParameter("malformed mixture".into()));
                }
                check_weights(weights)?;
                let n = components[0].n_classes();
                for c in components {
                    if matches!(c, Self::Mixture { .. }) {
                        return Err(Error::InvalidParameter("nested mixture".into()));
                    }
                    if c.n_classes() != n {
                        return Err(Error::DimensionMismatch {
                            expected: n,
                            got: c.n_classes(),
                        });
                    }
                    c.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Output of a deterministic rule given a precomputed `η̂(x)`.
    /// Returns the predicted class, or `None` for constant and mixture rules.
    pub fn class_from_eta(&self, eta: &[f64]) -> Option<usize> {
        match self {
            Self::WeightedArgmax { gain, .. } => Some(gain.argmax_column(eta)),
            Self::BinaryThreshold { t, .. } => Some(usize::from(eta[1] > *t)),
            _ => None,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<ClassDistribution> {
        self.predict_vec(x)
            .map(ClassDistribution::from_vec_unchecked)
    }

    /// Same as [`predict`](Self::predict) without the newtype wrapper.
    /// Mixture components sharing a scorer evaluate it once per call.
    pub fn predict_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_classes();
        match self {
            Self::Constant { dist } => Ok(dist.as_slice().to_vec()),
            Self::WeightedArgmax { cpe, .. } | Self::BinaryThreshold { cpe, .. } => {
                let eta = cpe.eta(x)?;
                let class = self.class_from_eta(&eta).expect("deterministic rule");
                let mut out = vec![0.0; n];
                out[class] = 1.0;
                Ok(out)
            }
            Self::Mixture {
                weights,
                components,
                ..
            } => {
                let mut out = vec![0.0; n];
                let mut cache: Vec<(*const Scorer, Vec<f64>)> = Vec::new();
                for (w, c) in weights.iter().zip(components) {
                    match c {
                        Self::WeightedArgmax { cpe, .. } | Self::BinaryThreshold { cpe, .. } => {
                            let key = Arc::as_ptr(cpe);
                            let pos = match cache.iter().position(|(k, _)| *k == key) {
                                Some(p) => p,
                                None => {
                                    cache.push((key, cpe.eta(x)?));
                                    cache.len() - 1
                                }
                            };
                            let class = c.class_from_eta(&cache[pos].1).expect("deterministic");
                            out[class] += w;
                        }
                        other => {
                            let h = other.predict_vec(x)?;
                            for (o, v) in out.iter_mut().zip(h) {
                                *o += w * v;
                            }
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    /// Parses and validates a rule; identical scorers inside a mixture are
    /// shared afterwards so prediction evaluates them once.
    pub fn from_json(s: &str) -> Result<Self> {
        let mut rule: Self = serde_json::from_str(s)
            .map_err(|e| Error::InvalidParameter(format!("classifier JSON: {e}")))?;
        rule.validate()?;
        rule.share_scorers();
        Ok(rule)
    }

    fn share_scorers(&mut self) {
        let Self::Mixture { components, .. } = self else {
            return;
        };
        let mut seen: Vec<Arc<Scorer>> = Vec::new();
        for c in components.iter_mut() {
            if let Self::WeightedArgmax { cpe, .. } | Self::BinaryThreshold { cpe, .. } = c {
                match seen.iter().find(|s| ***s == **cpe) {
                    Some(s) => *cpe = Arc::clone(s),
                    None => seen.push(Arc::clone(cpe)),
                }
            }
        }
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    let mut sum = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::InvalidParameter(format!("mixture weight {k} = {w}")));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidParameter(format!(
            "mixture weights sum to {sum}"
        )));
    }
    Ok(())
}
