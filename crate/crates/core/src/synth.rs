//! Synthetic distributions: finite-support joint distributions with exact
//! conditionals, and Gaussian class-conditional mixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::confusion::{check_class_count, ClassDistribution, ConfusionMatrix, LabeledSample};
use crate::error::{Error, Result};

/// Tolerance on the total support mass.
pub const MASS_TOL: f64 = 1e-12;

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws an index from a discrete distribution given by `probs`.
pub(crate) fn draw_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Flat Dirichlet draw.
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            e.max(f64::MIN_POSITIVE)
        })
        .collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// One support point: features, marginal mass and conditional label law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub x: Vec<f64>,
    pub q: f64,
    pub eta: ClassDistribution,
}

#[derive(Deserialize)]
struct RawFinite {
    n: usize,
    d: usize,
    points: Vec<SupportPoint>,
}

/// Joint distribution of `(X, Y)` with finitely many feature values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFinite")]
pub struct FiniteDistribution {
    n: usize,
    d: usize,
    points: Vec<SupportPoint>,
}

impl TryFrom<RawFinite> for FiniteDistribution {
    type Error = Error;
    fn try_from(r: RawFinite) -> Result<Self> {
        Self::new(r.n, r.d, r.points)
    }
}

impl FiniteDistribution {
    pub fn new(n: usize, d: usize, points: Vec<SupportPoint>) -> Result<Self> {
        check_class_count(n)?;
        if points.is_empty() {
            return Err(Error::InvalidDistribution("no support points".into()));
        }
        let mut total = 0.0;
        for (k, p) in points.iter().enumerate() {
            if p.x.len() != d {
                return Err(Error::InvalidDistribution(format!(
                    "point {k} has {} features, expected {d}",
                    p.x.len()
                )));
            }
            if p.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDistribution(format!(
                    "point {k} has non-finite features"
                )));
            }
            if !(p.q.is_finite() && p.q > 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "point {k} mass {}",
                    p.q
                )));
            }
            if p.eta.n() != n {
                return Err(Error::InvalidDistribution(format!(
                    "point {k} conditional has {} classes, expected {n}",
                    p.eta.n()
                )));
            }
            if points[..k].iter().any(|o| o.x == p.x) {
                return Err(Error::InvalidDistribution(format!(
                    "point {k} repeats an earlier feature vector"
                )));
            }
            total += p.q;
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!(
                "support masses sum to {total}"
            )));
        }
        Ok(Self { n, d, points })
    }

    /// Builds a distribution with one-hot features over support indices.
    pub fn from_masses(masses: Vec<f64>, etas: Vec<ClassDistribution>) -> Result<Self> {
        let k = masses.len();
        if etas.len() != k || k == 0 {
            return Err(Error::InvalidDistribution(format!(
                "{k} masses for {} conditionals",
                etas.len()
            )));
        }
        let n = etas[0].n();
        let points = masses
            .into_iter()
            .zip(etas)
            .enumerate()
            .map(|(i, (q, eta))| {
                let mut x = vec![0.0; k];
                x[i] = 1.0;
                SupportPoint { x, q, eta }
            })
            .collect();
        Self::new(n, k, points)
    }

    /// Single feature value with `η = [1/2, 1/2]`: the instance on which every
    /// deterministic classifier has H-mean zero.
    pub fn coin_flip() -> Self {
        Self {
            n: 2,
            d: 1,
            points: vec![SupportPoint {
                x: vec![1.0],
                q: 1.0,
                eta: ClassDistribution::uniform(2),
            }],
        }
    }

    /// Random instance: flat-Dirichlet masses and conditionals, one-hot features.
    pub fn random(n: usize, k: usize, seed: u64) -> Result<Self> {
        check_class_count(n)?;
        if k == 0 {
            return Err(Error::InvalidDistribution("no support points".into()));
        }
        let mut rng = rng_from_seed(seed);
        let masses = random_simplex(&mut rng, k);
        let etas = (0..k)
            .map(|_| ClassDistribution::from_vec_unchecked(random_simplex(&mut rng, n)))
            .collect();
        let mut dist = Self::from_masses(masses, etas)?;
        renormalize_masses(&mut dist.points);
        Ok(dist)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SupportPoint] {
        &self.points
    }

    /// Class priors `π_i = Σ_k q_k η_k[i]`.
    pub fn priors(&self) -> ClassDistribution {
        let mut pi = vec![0.0; self.n];
        for p in &self.points {
            for (v, e) in pi.iter_mut().zip(p.eta.as_slice()) {
                *v += p.q * e;
            }
        }
        ClassDistribution::from_vec_unchecked(pi)
    }

    /// Conditional `η(x)` for a support feature vector.
    pub fn eta_at(&self, x: &[f64]) -> Result<&ClassDistribution> {
        self.points
            .iter()
            .find(|p| p.x == x)
            .map(|p| &p.eta)
            .ok_or(Error::UnknownSupportPoint)
    }

    /// Index of the support point with features `x`.
    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        self.points.iter().position(|p| p.x == x)
    }

    /// Draws `m` labeled examples: point `k` with probability `q_k`, then the
    /// label from `η_k`.
    pub fn sample(&self, m: usize, seed: u64) -> Result<LabeledSample> {
        if m == 0 {
            return Err(Error::EmptySample);
        }
        let mut rng = rng_from_seed(seed);
        let masses: Vec<f64> = self.points.iter().map(|p| p.q).collect();
        let mut features = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        for _ in 0..m {
            let k = draw_index(&mut rng, &masses);
            let p = &self.points[k];
            labels.push(draw_index(&mut rng, p.eta.as_slice()));
            features.push(p.x.clone());
        }
        LabeledSample::new(self.n, features, labels)
    }

    /// Confusion matrix of the randomized rule that outputs `outputs[k]` at
    /// support point `k`.
    pub fn conf_of_outputs(&self, outputs: &[Vec<f64>]) -> Result<ConfusionMatrix> {
        if outputs.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                got: outputs.len(),
            });
        }
        let n = self.n;
        let mut entries = vec![0.0; n * n];
        for (p, h) in self.points.iter().zip(outputs) {
            if h.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: h.len(),
                });
            }
            for i in 0..n {
                let w = p.q * p.eta[i];
                for j in 0..n {
                    entries[i * n + j] += w * h[j];
                }
            }
        }
        Ok(ConfusionMatrix::from_parts_unchecked(n, entries))
    }

    /// A feasible confusion matrix from independent flat-Dirichlet outputs at
    /// each support point.
    pub fn random_feasible_conf<R: Rng + ?Sized>(&self, rng: &mut R) -> ConfusionMatrix {
        let outputs: Vec<Vec<f64>> = (0..self.points.len())
            .map(|_| random_simplex(rng, self.n))
            .collect();
        self.conf_of_outputs(&outputs).expect("shapes match")
    }
}

fn renormalize_masses(points: &mut [SupportPoint]) {
    let s: f64 = points.iter().map(|p| p.q).sum();
    points.iter_mut().for_each(|p| p.q /= s);
}

/// Class-conditional Gaussians with diagonal covariances. Missing fields
/// take their default values when deserializing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianMixtureSpec {
    pub priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Diagonal of each class covariance.
    pub covariances: Vec<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GaussianMixtureSpec {
    /// Three classes, two features, unit-circle means at 0°, 120°, 240°,
    /// shared identity covariance, equal priors.
    fn default() -> Self {
        let means = (0..3)
            .map(|k| {
                let a = (k as f64) * 2.0 * std::f64::consts::PI / 3.0;
                vec![a.cos(), a.sin()]
            })
            .collect();
        Self {
            priors: vec![1.0 / 3.0; 3],
            means,
            covariances: vec![vec![1.0, 1.0]; 3],
            seed: 0,
        }
    }
}

impl GaussianMixtureSpec {
    pub fn n(&self) -> usize {
        self.priors.len()
    }

    pub fn d(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        check_class_count(n)?;
        ClassDistribution::new(self.priors.clone())?;
        let d = self.d();
        if d == 0 {
            return Err(Error::InvalidDistribution("zero feature dimension".into()));
        }
        if self.means.len() != n || self.covariances.len() != n {
            return Err(Error::InvalidDistribution(format!(
                "{n} priors, {} means, {} covariances",
                self.means.len(),
                self.covariances.len()
            )));
        }
        for y in 0..n {
            if self.means[y].len() != d || self.covariances[y].len() != d {
                return Err(Error::InvalidDistribution(format!(
                    "class {y} has wrong dimension"
                )));
            }
            if self.means[y].iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDistribution(format!("class {y} mean")));
            }
            if self.covariances[y]
                .iter()
                .any(|&v| !(v.is_finite() && v > 0.0))
            {
                return Err(Error::InvalidDistribution(format!(
                    "class {y} covariance must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Exact posterior `η(x)`, computed in log space.
    pub fn eta(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.d();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        let logs: Vec<f64> = (0..self.n())
            .map(|y| {
                if self.priors[y] <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let mut s = self.priors[y].ln();
                for ((xi, mu), var) in x.iter().zip(&self.means[y]).zip(&self.covariances[y]) {
                    s -= 0.5 * ((xi - mu).powi(2) / var + var.ln());
                }
                s
            })
            .collect();
        Ok(softmax_of_logs(&logs))
    }

    /// Draws `m` examples: label from the priors, then features from the
    /// class Gaussian.
    pub fn sample(&self, m: usize, seed: u64) -> Result<LabeledSample> {
        self.validate()?;
        if m == 0 {
            return Err(Error::EmptySample);
        }
        let mut rng = rng_from_seed(seed);
        let mut features = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        for _ in 0..m {
            let y = draw_index(&mut rng, &self.priors);
            let x = self.means[y]
                .iter()
                .zip(&self.covariances[y])
                .map(|(mu, var)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mu + var.sqrt() * z
                })
                .collect();
            features.push(x);
            labels.push(y);
        }
        LabeledSample::new(self.n(), features, labels)
    }
}

pub(crate) fn softmax_of_logs(logs: &[f64]) -> Vec<f64> {
    let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - mx).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    out
}

/// Anything that can produce seeded i.i.d. labeled samples.
pub trait Sampler {
    fn sample(&self, m: usize, seed: u64) -> Result<LabeledSample>;
}

impl Sampler for FiniteDistribution {
    fn sample(&self, m: usize, seed: u64) -> Result<LabeledSample> {
        FiniteDistribution::sample(self, m, seed)
    }
}

impl Sampler for GaussianMixtureSpec {
    fn sample(&self, m: usize, seed: u64) -> Result<LabeledSample> {
        GaussianMixtureSpec::sample(self, m, seed)
    }
}

pub fn sample_from<S: Sampler + ?Sized>(source: &S, m: usize, seed: u64) -> Result<LabeledSample> {
    source.sample(m, seed)
}

/// Validated Gaussian generator paired with its exact conditional.
#[derive(Debug, Clone)]
pub struct GaussianSynth {
    spec: GaussianMixtureSpec,
}

pub fn make_gaussian_synth(spec: GaussianMixtureSpec) -> Result<GaussianSynth> {
    spec.validate()?;
    Ok(GaussianSynth { spec })
}

impl GaussianSynth {
    pub fn spec(&self) -> &GaussianMixtureSpec {
        &self.spec
    }

    pub fn sample(&self, m: usize, seed: u64) -> Result<LabeledSample> {
        self.spec.sample(m, seed)
    }

    pub fn eta(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.spec.eta(x)
    }
}

impl Sampler for GaussianSynth {
    fn sample(&self, m: usize, seed: u64) -> Result<LabeledSample> {
        self.spec.sample(m, seed)
    }
}
