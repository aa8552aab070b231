//! Performance metrics as functions of the confusion matrix, smoothed
//! H/Q/G-mean surrogates with closed-form gradients, and their smoothing,
//! Lipschitz and smoothness constants.
//!
//! Indices are 0-based: "class 1" of the usual binary notation is index 0.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::confusion::{ClassDistribution, ConfusionMatrix, GainMatrix};
use crate::error::{Error, Result};

/// Ratio with the `0/0 = 0` convention.
fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 && den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MetricId {
    Accuracy,
    Am,
    BinaryF1,
    Jaccard,
    Ams,
    MicroF1,
    MacroF1,
    HMean,
    QMean,
    GMean,
    MinMax,
}

impl MetricId {
    pub const ALL: [MetricId; 11] = [
        Self::Accuracy,
        Self::Am,
        Self::BinaryF1,
        Self::Jaccard,
        Self::Ams,
        Self::MicroF1,
        Self::MacroF1,
        Self::HMean,
        Self::QMean,
        Self::GMean,
        Self::MinMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Accuracy => "accuracy",
            Self::Am => "am",
            Self::BinaryF1 => "binary-f1",
            Self::Jaccard => "jaccard",
            Self::Ams => "ams",
            Self::MicroF1 => "micro-f1",
            Self::MacroF1 => "macro-f1",
            Self::HMean => "hmean",
            Self::QMean => "qmean",
            Self::GMean => "gmean",
            Self::MinMax => "minmax",
        }
    }

    pub fn requires_binary(self) -> bool {
        matches!(self, Self::BinaryF1 | Self::Jaccard | Self::Ams)
    }

    /// Non-decreasing when mass moves from an off-diagonal entry to the
    /// diagonal of the same row. Every metric here except MinMax.
    pub fn is_monotone(self) -> bool {
        !matches!(self, Self::MinMax)
    }

    pub fn is_smoothable(self) -> bool {
        matches!(self, Self::HMean | Self::QMean | Self::GMean)
    }

    pub fn check_n(self, n: usize) -> Result<()> {
        if self.requires_binary() && n != 2 {
            return Err(Error::RequiresBinary {
                metric: self.name().to_string(),
                n,
            });
        }
        Ok(())
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|m| m.name() == t)
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

impl TryFrom<String> for MetricId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MetricId> for String {
    fn from(m: MetricId) -> String {
        m.name().to_string()
    }
}

fn tpr(c: &ConfusionMatrix, y: usize) -> f64 {
    ratio(c.diag(y), c.row_sum(y))
}

/// `ψ(C)` for any metric.
pub fn eval_metric(id: MetricId, c: &ConfusionMatrix) -> Result<f64> {
    let n = c.n();
    id.check_n(n)?;
    let nf = n as f64;
    let v = match id {
        MetricId::Accuracy => (0..n).map(|y| c.diag(y)).sum(),
        MetricId::Am => (0..n).map(|y| tpr(c, y)).sum::<f64>() / nf,
        MetricId::BinaryF1 => {
            let tp = c.get(1, 1);
            ratio(2.0 * tp, 2.0 * tp + c.get(0, 1) + c.get(1, 0))
        }
        MetricId::Jaccard => {
            let tp = c.get(1, 1);
            ratio(tp, tp + c.get(1, 0) + c.get(0, 1))
        }
        MetricId::Ams => {
            let (fp, tp) = (c.get(0, 1), c.get(1, 1));
            if fp <= 0.0 {
                return Err(Error::AmsUndefined);
            }
            let inner = (fp + tp) * (tp / fp).ln_1p() - tp;
            (2.0 * inner.max(0.0)).sqrt()
        }
        MetricId::MicroF1 => {
            let tp: f64 = (1..n).map(|y| c.diag(y)).sum();
            let off: f64 = (0..n).map(|y| c.off_diagonal_row_sum(y)).sum();
            ratio(2.0 * tp, 2.0 * tp + off)
        }
        MetricId::MacroF1 => {
            (0..n)
                .map(|y| ratio(2.0 * c.diag(y), c.row_sum(y) + c.col_sum(y)))
                .sum::<f64>()
                / nf
        }
        MetricId::HMean => {
            let mut s = 0.0;
            for y in 0..n {
                s += ratio(c.row_sum(y), c.diag(y));
            }
            if s.is_infinite() {
                0.0
            } else {
                ratio(nf, s)
            }
        }
        MetricId::QMean => {
            let q: f64 = (0..n).map(|y| (1.0 - tpr(c, y)).powi(2)).sum::<f64>() / nf;
            1.0 - q.sqrt()
        }
        MetricId::GMean => (0..n).map(|y| tpr(c, y)).product::<f64>().powf(1.0 / nf),
        MetricId::MinMax => (0..n).map(|y| tpr(c, y)).fold(f64::INFINITY, f64::min),
    };
    Ok(v)
}

/// Default smoothing parameter per base metric.
pub fn default_rho(base: MetricId) -> f64 {
    match base {
        MetricId::GMean => 0.05,
        _ => 0.01,
    }
}

/// H-, Q- or G-mean with smoothing parameter `ρ ∈ [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SmoothedMetric {
    base: MetricId,
    rho: f64,
}

impl SmoothedMetric {
    pub fn new(base: MetricId, rho: f64) -> Result<Self> {
        if !base.is_smoothable() {
            return Err(Error::InvalidParameter(format!(
                "no smoothed surrogate for {base}"
            )));
        }
        if !(rho.is_finite() && (0.0..1.0).contains(&rho)) {
            return Err(Error::InvalidParameter(format!(
                "rho = {rho} outside [0,1)"
            )));
        }
        Ok(Self { base, rho })
    }

    pub fn with_default_rho(base: MetricId) -> Result<Self> {
        Self::new(base, default_rho(base))
    }

    pub fn base(&self) -> MetricId {
        self.base
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.base, rho)
    }
}

impl fmt::Display for SmoothedMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:rho={}", self.base, self.rho)
    }
}

impl FromStr for SmoothedMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h, Some(t)),
            None => (s, None),
        };
        let base: MetricId = head.parse()?;
        let rho = match tail {
            None => default_rho(base),
            Some(t) => {
                let v = t
                    .trim()
                    .strip_prefix("rho=")
                    .ok_or_else(|| Error::UnknownMetric(s.to_string()))?;
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("rho '{v}'")))?
            }
        };
        Self::new(base, rho)
    }
}

impl TryFrom<String> for SmoothedMetric {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SmoothedMetric> for String {
    fn from(m: SmoothedMetric) -> String {
        m.to_string()
    }
}

/// Either a plain metric or a smoothed surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricSpec {
    Plain(MetricId),
    Smoothed(SmoothedMetric),
}

impl MetricSpec {
    pub fn eval(&self, c: &ConfusionMatrix) -> Result<f64> {
        match self {
            Self::Plain(id) => eval_metric(*id, c),
            Self::Smoothed(sm) => eval_smoothed(sm, c),
        }
    }

    pub fn base(&self) -> MetricId {
        match self {
            Self::Plain(id) => *id,
            Self::Smoothed(sm) => sm.base(),
        }
    }

    pub fn check_n(&self, n: usize) -> Result<()> {
        self.base().check_n(n)
    }
}

impl From<MetricId> for MetricSpec {
    fn from(id: MetricId) -> Self {
        Self::Plain(id)
    }
}

impl From<SmoothedMetric> for MetricSpec {
    fn from(sm: SmoothedMetric) -> Self {
        Self::Smoothed(sm)
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Plain(id) => id.fmt(f),
            Self::Smoothed(sm) => sm.fmt(f),
        }
    }
}

impl FromStr for MetricSpec {
    type Err = Error;
    /// `"hmean"` is the plain metric; `"hmean:rho=0.01"` the surrogate.
    fn from_str(s: &str) -> Result<Self> {
        if s.contains(':') {
            s.parse().map(Self::Smoothed)
        } else {
            s.parse().map(Self::Plain)
        }
    }
}

fn check_rho_domain(sm: &SmoothedMetric, c: &ConfusionMatrix) -> Result<()> {
    if sm.rho > 0.0 {
        return Ok(());
    }
    for y in 0..c.n() {
        let bad = match sm.base {
            MetricId::QMean => c.row_sum(y) <= 0.0,
            _ => c.diag(y) <= 0.0,
        };
        if bad {
            return Err(Error::SingularAtZeroRho { class: y });
        }
    }
    Ok(())
}

/// `ψ_ρ(C)`.
pub fn eval_smoothed(sm: &SmoothedMetric, c: &ConfusionMatrix) -> Result<f64> {
    check_rho_domain(sm, c)?;
    let n = c.n();
    let nf = n as f64;
    let rho = sm.rho;
    let v = match sm.base {
        MetricId::HMean => {
            let s: f64 = (0..n)
                .map(|y| (c.row_sum(y) + rho) / (c.diag(y) + rho))
                .sum();
            nf / s
        }
        MetricId::QMean => {
            let q: f64 = (0..n)
                .map(|y| ((c.off_diagonal_row_sum(y) + rho) / (c.row_sum(y) + rho)).powi(2))
                .sum::<f64>()
                / nf;
            1.0 - q.sqrt()
        }
        MetricId::GMean => {
            let l: f64 = (0..n)
                .map(|y| ((c.diag(y) + rho) / (c.row_sum(y) + rho)).ln())
                .sum();
            (l / nf).exp()
        }
        other => unreachable!("{other} has no surrogate"),
    };
    Ok(v)
}

/// Entrywise gradient `∇ψ_ρ(C)`.
pub fn grad_smoothed(sm: &SmoothedMetric, c: &ConfusionMatrix) -> Result<GainMatrix> {
    check_rho_domain(sm, c)?;
    let n = c.n();
    let nf = n as f64;
    let rho = sm.rho;
    let mut g = vec![0.0; n * n];
    match sm.base {
        MetricId::HMean => {
            let s: f64 = (0..n)
                .map(|y| (c.row_sum(y) + rho) / (c.diag(y) + rho))
                .sum();
            let s2 = s * s;
            for u in 0..n {
                let cu = c.diag(u) + rho;
                let off = c.off_diagonal_row_sum(u);
                for v in 0..n {
                    g[u * n + v] = if u == v {
                        nf * off / (cu * cu * s2)
                    } else {
                        -nf / (cu * s2)
                    };
                }
            }
        }
        MetricId::QMean => {
            let ab: Vec<(f64, f64)> = (0..n)
                .map(|y| (c.off_diagonal_row_sum(y) + rho, c.row_sum(y) + rho))
                .collect();
            let r = ab.iter().map(|(a, b)| (a / b).powi(2)).sum::<f64>().sqrt();
            if r == 0.0 {
                return Err(Error::SingularAtZeroRho { class: 0 });
            }
            let k = 1.0 / (nf.sqrt() * r);
            for u in 0..n {
                let (a, b) = ab[u];
                let b3 = b * b * b;
                for v in 0..n {
                    g[u * n + v] = if u == v {
                        k * a * a / b3
                    } else {
                        -k * a * c.diag(u) / b3
                    };
                }
            }
        }
        MetricId::GMean => {
            let psi = eval_smoothed(sm, c)?;
            for u in 0..n {
                let cu = c.diag(u) + rho;
                let ru = c.row_sum(u) + rho;
                let off = c.off_diagonal_row_sum(u);
                for v in 0..n {
                    g[u * n + v] = if u == v {
                        psi / nf * off / (ru * cu)
                    } else {
                        -psi / nf / ru
                    };
                }
            }
        }
        other => unreachable!("{other} has no surrogate"),
    }
    if let Some(k) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: k / n,
            col: k % n,
        });
    }
    GainMatrix::new(n, g)
}

/// Uniform approximation error, Lipschitz constant and smoothness parameter
/// of a surrogate, all with respect to the ℓ1 norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConstants {
    pub theta: f64,
    pub lipschitz: f64,
    pub smoothness: f64,
}

pub fn smoothing_constants(
    sm: &SmoothedMetric,
    pi_min: f64,
    n: usize,
) -> Result<SmoothingConstants> {
    if !(pi_min > 0.0 && pi_min <= 1.0) {
        return Err(Error::InvalidParameter(format!("pi_min = {pi_min}")));
    }
    if n < 2 {
        return Err(Error::ClassCount(n));
    }
    let rho = sm.rho;
    if rho.is_nan() || rho <= 0.0 {
        return Err(Error::InvalidParameter("rho must be > 0".into()));
    }
    let nf = n as f64;
    let sq = nf.sqrt();
    let k = match sm.base {
        MetricId::HMean => SmoothingConstants {
            theta: nf / pi_min * rho,
            lipschitz: nf / rho,
            smoothness: 2.0 * nf / (rho * rho),
        },
        MetricId::QMean => SmoothingConstants {
            theta: rho / (pi_min * sq),
            lipschitz: 1.0 / (sq * rho),
            smoothness: 2.0 / sq / (rho * rho) * (1.0 + 1.0 / rho),
        },
        MetricId::GMean => SmoothingConstants {
            theta: 2.0 * rho.powf(1.0 / nf),
            lipschitz: 1.0 / nf / rho * (1.0 + 1.0 / rho).powf(1.0 - 1.0 / nf),
            smoothness: 1.0 / (nf * nf) / rho.powi(3) * (1.0 + 1.0 / rho).powf(1.0 - 2.0 / nf),
        },
        other => unreachable!("{other} has no surrogate"),
    };
    Ok(k)
}

/// Constant `ξ` of the convex-like bound `ψ(C) − ψ(C') ≤ ξ⟨∇ψ(C), C − C'⟩`.
pub fn xi_constant(id: MetricId, priors: &ClassDistribution) -> Result<f64> {
    match id {
        MetricId::Ams => Ok(1.0),
        MetricId::BinaryF1 => {
            id.check_n(priors.n())?;
            Ok(1.0 / priors[0])
        }
        MetricId::MicroF1 => Ok(1.0 / (1.0 - priors[0])),
        other => Err(Error::NoPublishedXi(other.to_string())),
    }
}
