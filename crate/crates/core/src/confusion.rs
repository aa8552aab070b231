//! Confusion matrices, gain matrices, labeled samples and the confusion
//! operations shared by every learner.
//!
//! Class indices are zero-based throughout the library (`0..n`). Text
//! formats (CSV datasets, metric docs) use the one-based labels `1..=n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rule::ClassifierRule;
use crate::synth::FiniteDistribution;

/// Absolute tolerance for simplex and sum-to-one checks.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Largest supported class count.
pub const MAX_CLASSES: usize = 64;

pub(crate) fn check_class_count(n: usize) -> Result<()> {
    if n == 0 || n > MAX_CLASSES {
        return Err(Error::ClassCount(n));
    }
    Ok(())
}

/// A point of the probability simplex over `n` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_class_count(probs.len())?;
        let sum: f64 = probs.iter().sum();
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::NotSimplex { index, value, sum });
            }
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::NotSimplex {
                index: probs.len() - 1,
                value: probs[probs.len() - 1],
                sum,
            });
        }
        Ok(Self(probs))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn one_hot(n: usize, class: usize) -> Self {
        let mut p = vec![0.0; n];
        p[class] = 1.0;
        Self(p)
    }

    pub(crate) fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        Self(probs)
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Smallest probability, used as `π_min` when the vector holds priors.
    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| (a - b).abs()).sum()
    }
}

impl TryFrom<Vec<f64>> for ClassDistribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ClassDistribution> for Vec<f64> {
    fn from(d: ClassDistribution) -> Self {
        d.0
    }
}

impl std::ops::Index<usize> for ClassDistribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Deserialize)]
struct RawMatrix {
    n: usize,
    entries: Vec<f64>,
}

/// Joint probabilities `P(Y = i, prediction = j)`, dense row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct ConfusionMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl TryFrom<RawMatrix> for ConfusionMatrix {
    type Error = Error;
    fn try_from(raw: RawMatrix) -> Result<Self> {
        Self::new(raw.n, raw.entries)
    }
}

impl ConfusionMatrix {
    /// Validated constructor: entries nonnegative and summing to one.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        let m = Self::raw(n, entries)?;
        for (k, &v) in m.entries.iter().enumerate() {
            if v < -SIMPLEX_TOL {
                return Err(Error::InvalidConfusion(format!(
                    "negative entry ({}, {}) = {v}",
                    k / n,
                    k % n
                )));
            }
        }
        let total = m.total();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidConfusion(format!("entries sum to {total}")));
        }
        Ok(m)
    }

    /// Shape- and finiteness-checked constructor that skips the simplex
    /// checks. Used for finite-difference perturbations, where entries no
    /// longer sum to one.
    pub fn raw(n: usize, entries: Vec<f64>) -> Result<Self> {
        check_class_count(n)?;
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: entries.len(),
            });
        }
        if let Some(k) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k / n,
                col: k % n,
            });
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let entries: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(n, entries)
    }

    /// `diag(π)`: the confusion matrix of a perfect classifier.
    pub fn diagonal(priors: &ClassDistribution) -> Self {
        let n = priors.n();
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = priors[i];
        }
        Self { n, entries }
    }

    pub(crate) fn from_parts_unchecked(n: usize, entries: Vec<f64>) -> Self {
        Self { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    /// `Σ_{j ≠ i} C[i][j]`, summed directly rather than as `row − diag`.
    pub fn off_diagonal_row_sum(&self, i: usize) -> f64 {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row_sum(i)).collect()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().sum()
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.get(i, i)
    }

    /// Checks that row sums match `priors` within `tol`, reporting the first
    /// offending row.
    pub fn check_priors(&self, priors: &[f64], tol: f64) -> Result<()> {
        if priors.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: priors.len(),
            });
        }
        for (i, &p) in priors.iter().enumerate() {
            let r = self.row_sum(i);
            if (r - p).abs() > tol {
                return Err(Error::InvalidConfusion(format!(
                    "row {i} sums to {r}, prior is {p}"
                )));
            }
        }
        Ok(())
    }

    pub fn l1_distance(&self, other: &ConfusionMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn max_abs_diff(&self, other: &ConfusionMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Gains `G[i][j]` for predicting `j` when the truth is `i`. Column `j` is the
/// score vector of class `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct GainMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl TryFrom<RawMatrix> for GainMatrix {
    type Error = Error;
    fn try_from(raw: RawMatrix) -> Result<Self> {
        Self::new(raw.n, raw.entries)
    }
}

impl GainMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        check_class_count(n)?;
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: entries.len(),
            });
        }
        if let Some(k) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k / n,
                col: k % n,
            });
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        Self::new(n, rows.iter().flatten().copied().collect())
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { n, entries }
    }

    pub(crate) fn from_parts_unchecked(n: usize, entries: Vec<f64>) -> Self {
        Self { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|v| v * c).collect(),
        }
    }

    /// `g_jᵀ η`: the expected gain of predicting class `j`.
    #[inline]
    pub fn column_score(&self, j: usize, eta: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for (i, &e) in eta.iter().enumerate() {
            s += self.entries[i * n + j] * e;
        }
        s
    }

    /// Weighted argmax over columns; ties go to the larger class index.
    #[inline]
    pub fn argmax_column(&self, eta: &[f64]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for j in 0..self.n {
            let s = self.column_score(j, eta);
            if s >= best_score {
                best = j;
                best_score = s;
            }
        }
        best
    }

    pub fn linf(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `⟨G, C⟩ = Σ_ij G_ij C_ij`.
    pub fn inner(&self, c: &ConfusionMatrix) -> f64 {
        self.entries
            .iter()
            .zip(c.entries())
            .map(|(g, v)| g * v)
            .sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.entries[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }
}

/// Feature rows with zero-based labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    n: usize,
    d: usize,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl LabeledSample {
    pub fn new(n: usize, features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        check_class_count(n)?;
        if features.is_empty() {
            return Err(Error::EmptySample);
        }
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        let d = features[0].len();
        for (row, (x, &y)) in features.iter().zip(&labels).enumerate() {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            if y >= n {
                return Err(Error::InvalidLabel { row, label: y, n });
            }
            if let Some(col) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, col });
            }
        }
        Ok(Self {
            n,
            d,
            features,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.features
            .iter()
            .map(Vec::as_slice)
            .zip(self.labels.iter().copied())
    }

    /// Empirical class frequencies.
    pub fn priors(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.n];
        for &y in &self.labels {
            p[y] += 1.0;
        }
        let m = self.len() as f64;
        p.iter_mut().for_each(|v| *v /= m);
        p
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.n,
            indices.iter().map(|&i| self.features[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Confusion matrix of `rule` on the empirical distribution of `sample`.
pub fn empirical_conf(rule: &ClassifierRule, sample: &LabeledSample) -> Result<ConfusionMatrix> {
    let n = sample.n();
    if rule.n_classes() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rule.n_classes(),
        });
    }
    let mut entries = vec![0.0; n * n];
    for (x, y) in sample.rows() {
        let h = rule.predict_vec(x)?;
        for (j, &hj) in h.iter().enumerate() {
            entries[y * n + j] += hj;
        }
    }
    let m = sample.len() as f64;
    entries.iter_mut().for_each(|v| *v /= m);
    Ok(ConfusionMatrix::from_parts_unchecked(n, entries))
}

/// Exact confusion matrix on a finite-support distribution:
/// `C[i][j] = Σ_k q_k η_k[i] h_j(x_k)`.
pub fn exact_conf(rule: &ClassifierRule, dist: &FiniteDistribution) -> Result<ConfusionMatrix> {
    let n = dist.n();
    if rule.n_classes() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rule.n_classes(),
        });
    }
    let mut entries = vec![0.0; n * n];
    for p in dist.points() {
        let h = rule.predict_vec(&p.x)?;
        for i in 0..n {
            let w = p.q * p.eta[i];
            if w == 0.0 {
                continue;
            }
            for (j, &hj) in h.iter().enumerate() {
                entries[i * n + j] += w * hj;
            }
        }
    }
    Ok(ConfusionMatrix::from_parts_unchecked(n, entries))
}

/// Entrywise convex combination of confusion matrices.
pub fn mix_conf(parts: &[(f64, &ConfusionMatrix)]) -> Result<ConfusionMatrix> {
    let Some((_, first)) = parts.first() else {
        return Err(Error::InvalidParameter(
            "no confusion matrices to mix".into(),
        ));
    };
    let n = first.n();
    let mut wsum = 0.0;
    for (k, (w, c)) in parts.iter().enumerate() {
        if !(w.is_finite() && *w >= 0.0) {
            return Err(Error::InvalidParameter(format!("weight {k} = {w}")));
        }
        if c.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: c.n(),
            });
        }
        wsum += w;
    }
    if (wsum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidParameter(format!(
            "mixture weights sum to {wsum}"
        )));
    }
    let mut entries = vec![0.0; n * n];
    for (w, c) in parts {
        for (e, v) in entries.iter_mut().zip(c.entries()) {
            *e += w * v;
        }
    }
    Ok(ConfusionMatrix::from_parts_unchecked(n, entries))
}

/// Output distribution of `rule` at `x`.
pub fn ensemble_predict(rule: &ClassifierRule, x: &[f64]) -> Result<ClassDistribution> {
    rule.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(labels: &[usize], n: usize) -> LabeledSample {
        let feats = labels.iter().map(|_| vec![0.0]).collect();
        LabeledSample::new(n, feats, labels.to_vec()).unwrap()
    }

    #[test]
    fn constant_rule_fills_first_column() {
        let rule = ClassifierRule::Constant {
            dist: ClassDistribution::new(vec![1.0, 0.0]).unwrap(),
        };
        let c = empirical_conf(&rule, &sample(&[0, 0, 1], 2)).unwrap();
        let expect = [2.0 / 3.0, 0.0, 1.0 / 3.0, 0.0];
        for (a, b) in c.entries().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_rule_splits_mass() {
        let rule = ClassifierRule::Constant {
            dist: ClassDistribution::uniform(2),
        };
        let c = empirical_conf(&rule, &sample(&[0], 2)).unwrap();
        assert_eq!(c.entries(), &[0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn empty_and_invalid_samples_rejected() {
        assert_eq!(
            LabeledSample::new(2, vec![], vec![]).unwrap_err(),
            Error::EmptySample
        );
        let err = LabeledSample::new(2, vec![vec![0.0], vec![1.0]], vec![0, 2]).unwrap_err();
        assert_eq!(
            err,
            Error::InvalidLabel {
                row: 1,
                label: 2,
                n: 2
            }
        );
    }

    #[test]
    fn mix_conf_identity_and_idempotence() {
        let c = ConfusionMatrix::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        let one = mix_conf(&[(1.0, &c)]).unwrap();
        assert!(one.max_abs_diff(&c) < 1e-15);
        let half = mix_conf(&[(0.5, &c), (0.5, &c)]).unwrap();
        assert!(half.max_abs_diff(&c) < 1e-15);
        assert!(mix_conf(&[(0.5, &c), (0.4, &c)]).is_err());
    }

    #[test]
    fn confusion_validation_reports_index() {
        let err = ConfusionMatrix::new(2, vec![0.5, -0.1, 0.3, 0.3]).unwrap_err();
        assert!(err.to_string().contains("(0, 1)"), "{err}");
        assert!(ConfusionMatrix::new(2, vec![0.5, 0.1, 0.3, 0.3]).is_err());
        assert!(ConfusionMatrix::new(65, vec![0.0; 65 * 65]).is_err());
    }

    #[test]
    fn class_distribution_validation() {
        assert!(ClassDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(ClassDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ClassDistribution::new(vec![1.5, -0.5]).is_err());
        let d: ClassDistribution = serde_json::from_str("[0.25,0.75]").unwrap();
        assert_eq!(d.as_slice(), &[0.25, 0.75]);
        assert!(serde_json::from_str::<ClassDistribution>("[0.25,0.5]").is_err());
    }

    #[test]
    fn argmax_ties_go_to_larger_index() {
        let g = GainMatrix::identity(2);
        assert_eq!(g.argmax_column(&[0.5, 0.5]), 1);
        assert_eq!(GainMatrix::identity(3).argmax_column(&[0.2, 0.5, 0.3]), 1);
    }

    #[test]
    fn matrix_json_shape() {
        let c = ConfusionMatrix::from_rows(&[vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"n":2,"entries":[0.25,0.25,0.25,0.25]}"#);
        let back: ConfusionMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let g: GainMatrix = serde_json::from_str(r#"{"n":2,"entries":[1,0,0,1]}"#).unwrap();
        assert_eq!(g, GainMatrix::identity(2));
        assert!(serde_json::from_str::<GainMatrix>(r#"{"n":2,"entries":[1,0,0]}"#).is_err());
    }
}
