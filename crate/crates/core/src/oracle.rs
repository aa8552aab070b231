//! Brute-force optima over finite-support distributions and regret
//! computation.

use serde::{Deserialize, Serialize};

use crate::confusion::ConfusionMatrix;
use crate::error::{Error, Result};
use crate::metrics::{smoothing_constants, MetricId, MetricSpec};
use crate::synth::FiniteDistribution;

/// Maximum grid size accepted by [`grid_oracle_optimum`].
pub const GRID_LIMIT: f64 = 1e8;
/// Maximum labeling count accepted by [`vertex_oracle_optimum`].
pub const VERTEX_LIMIT: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    Grid,
    ExhaustiveVertex,
    LongRunCg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub optimum_value: f64,
    pub optimum_conf: ConfusionMatrix,
    pub method: OracleMethod,
    /// Grid spacing per coordinate, for grid searches.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
    /// Upper bound on `P* − optimum_value` when a Lipschitz constant is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz_gap: Option<f64>,
    /// Output distribution at each support point achieving the optimum.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub optimum_outputs: Vec<Vec<f64>>,
}

fn check_priors(dist: &FiniteDistribution, metric: &MetricSpec) -> Result<()> {
    metric.check_n(dist.n())?;
    if matches!(metric.base(), MetricId::HMean | MetricId::GMean) {
        if let Some(class) = dist.priors().as_slice().iter().position(|&p| p <= 0.0) {
            return Err(Error::ZeroPriorClass { class });
        }
    }
    Ok(())
}

/// Simplex lattice with `levels − 1` steps per coordinate, in lexicographic
/// order of the integer compositions.
pub fn simplex_lattice(n: usize, levels: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(n, left - v, cur, out);
            cur.pop();
        }
    }
    let steps = levels - 1;
    let mut ints = Vec::new();
    rec(n, steps, &mut Vec::with_capacity(n), &mut ints);
    ints.into_iter()
        .map(|c| c.into_iter().map(|v| v as f64 / steps as f64).collect())
        .collect()
}

/// Best value over all randomized rules whose output at each support point
/// lies on a simplex lattice. A lower bound on the true optimum.
pub fn grid_oracle_optimum(
    dist: &FiniteDistribution,
    metric: &MetricSpec,
    levels: usize,
) -> Result<OracleResult> {
    if levels < 2 {
        return Err(Error::InvalidParameter("levels must be >= 2".into()));
    }
    let n = dist.n();
    let k = dist.len();
    let size = (levels as f64).powf(((n - 1) * k) as f64);
    if size > GRID_LIMIT {
        return Err(Error::SearchTooLarge {
            size,
            limit: GRID_LIMIT,
        });
    }
    check_priors(dist, metric)?;
    let lattice = simplex_lattice(n, levels);
    // contribution of lattice point `a` at support point `p`, row-major n×n
    let contrib: Vec<Vec<Vec<f64>>> = dist
        .points()
        .iter()
        .map(|p| {
            lattice
                .iter()
                .map(|h| {
                    let mut e = vec![0.0; n * n];
                    for i in 0..n {
                        for j in 0..n {
                            e[i * n + j] = p.q * p.eta[i] * h[j];
                        }
                    }
                    e
                })
                .collect()
        })
        .collect();
    let mut best = Best::default();
    let mut choice = vec![0usize; k];
    let mut partial = vec![vec![0.0; n * n]; k + 1];
    search(0, &contrib, &mut partial, &mut choice, &mut |c, ch| {
        let v = metric.eval(&ConfusionMatrix::from_parts_unchecked(n, c.to_vec()));
        best.offer(v, c, ch);
    });
    let (value, conf, ch) = best.finish()?;
    let spacing = 1.0 / (levels - 1) as f64;
    let lipschitz_gap = match metric {
        MetricSpec::Smoothed(sm) if sm.rho() > 0.0 && n >= 2 => {
            let l = smoothing_constants(sm, 1.0, n)?.lipschitz;
            // Rounding each output to the lattice moves it by at most
            // (n−1)·spacing in ℓ1, and the confusion by the q-weighted sum.
            Some(l * (n - 1) as f64 * spacing)
        }
        _ => None,
    };
    Ok(OracleResult {
        optimum_value: value,
        optimum_conf: ConfusionMatrix::from_parts_unchecked(n, conf),
        method: OracleMethod::Grid,
        resolution: Some(spacing),
        lipschitz_gap,
        optimum_outputs: ch.iter().map(|&a| lattice[a].clone()).collect(),
    })
}

fn search(
    depth: usize,
    contrib: &[Vec<Vec<f64>>],
    partial: &mut Vec<Vec<f64>>,
    choice: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[f64], &[usize]),
) {
    if depth == contrib.len() {
        visit(&partial[depth], choice);
        return;
    }
    for (a, c) in contrib[depth].iter().enumerate() {
        choice[depth] = a;
        let (lo, hi) = partial.split_at_mut(depth + 1);
        for ((o, b), v) in hi[0].iter_mut().zip(&lo[depth]).zip(c) {
            *o = b + v;
        }
        search(depth + 1, contrib, partial, choice, visit);
    }
}

#[derive(Default)]
struct Best {
    value: Option<f64>,
    conf: Vec<f64>,
    choice: Vec<usize>,
}

impl Best {
    /// Strict improvement only, so the lexicographically first optimum wins.
    fn offer(&mut self, v: Result<f64>, c: &[f64], ch: &[usize]) {
        let Ok(v) = v else { return };
        if v.is_nan() {
            return;
        }
        if self.value.is_none_or(|b| v > b) {
            self.value = Some(v);
            self.conf = c.to_vec();
            self.choice = ch.to_vec();
        }
    }

    fn finish(self) -> Result<(f64, Vec<f64>, Vec<usize>)> {
        match self.value {
            Some(v) => Ok((v, self.conf, self.choice)),
            None => Err(Error::InvalidParameter(
                "metric undefined at every candidate".into(),
            )),
        }
    }
}

/// Best value over all `n^K` deterministic labelings of the support.
pub fn vertex_oracle_optimum(
    dist: &FiniteDistribution,
    metric: &MetricSpec,
) -> Result<OracleResult> {
    let n = dist.n();
    let k = dist.len();
    let size = (n as f64).powi(k as i32);
    if size > VERTEX_LIMIT {
        return Err(Error::SearchTooLarge {
            size,
            limit: VERTEX_LIMIT,
        });
    }
    check_priors(dist, metric)?;
    let contrib: Vec<Vec<Vec<f64>>> = dist
        .points()
        .iter()
        .map(|p| {
            (0..n)
                .map(|j| {
                    let mut e = vec![0.0; n * n];
                    for i in 0..n {
                        e[i * n + j] = p.q * p.eta[i];
                    }
                    e
                })
                .collect()
        })
        .collect();
    let mut best = Best::default();
    let mut choice = vec![0usize; k];
    let mut partial = vec![vec![0.0; n * n]; k + 1];
    search(0, &contrib, &mut partial, &mut choice, &mut |c, ch| {
        let v = metric.eval(&ConfusionMatrix::from_parts_unchecked(n, c.to_vec()));
        best.offer(v, c, ch);
    });
    let (value, conf, ch) = best.finish()?;
    Ok(OracleResult {
        optimum_value: value,
        optimum_conf: ConfusionMatrix::from_parts_unchecked(n, conf),
        method: OracleMethod::ExhaustiveVertex,
        resolution: None,
        lipschitz_gap: None,
        optimum_outputs: ch
            .iter()
            .map(|&j| {
                let mut h = vec![0.0; n];
                h[j] = 1.0;
                h
            })
            .collect(),
    })
}

/// Non-negative regret `P* − achieved`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regret {
    pub value: f64,
    /// `achieved` exceeded the oracle value, so the raw difference was
    /// negative and has been clamped to 0.
    pub truncated: bool,
}

pub fn regret(oracle: &OracleResult, achieved: f64) -> Regret {
    let raw = oracle.optimum_value - achieved;
    Regret {
        value: raw.max(0.0),
        truncated: raw < 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confusion::ClassDistribution;
    use crate::metrics::eval_metric;

    #[test]
    fn lattice_sizes() {
        assert_eq!(simplex_lattice(2, 5).len(), 5);
        assert_eq!(simplex_lattice(3, 4).len(), 10);
        for p in simplex_lattice(3, 6) {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coin_flip_grid_and_vertex() {
        let d = FiniteDistribution::coin_flip();
        let hm = MetricSpec::Plain(MetricId::HMean);
        let g = grid_oracle_optimum(&d, &hm, 1001).unwrap();
        assert!((g.optimum_value - 0.5).abs() < 1e-12);
        assert_eq!(g.optimum_outputs, vec![vec![0.5, 0.5]]);
        let v = vertex_oracle_optimum(&d, &hm).unwrap();
        assert_eq!(v.optimum_value, 0.0);
    }

    #[test]
    fn linear_metric_grid_matches_vertex() {
        let d = FiniteDistribution::random(2, 3, 9).unwrap();
        let acc = MetricSpec::Plain(MetricId::Accuracy);
        let g = grid_oracle_optimum(&d, &acc, 11).unwrap();
        let v = vertex_oracle_optimum(&d, &acc).unwrap();
        assert!((g.optimum_value - v.optimum_value).abs() < 1e-12);
    }

    #[test]
    fn zero_prior_class_rejected() {
        let d = FiniteDistribution::from_masses(
            vec![0.5, 0.5],
            vec![ClassDistribution::one_hot(2, 0); 2],
        )
        .unwrap();
        let e = grid_oracle_optimum(&d, &MetricSpec::Plain(MetricId::GMean), 11).unwrap_err();
        assert!(e.to_string().contains("class with zero prior"));
    }

    #[test]
    fn oversized_search_reports_size() {
        let d = FiniteDistribution::random(3, 5, 1).unwrap();
        let e = grid_oracle_optimum(&d, &MetricSpec::Plain(MetricId::Accuracy), 101).unwrap_err();
        assert_eq!(
            e,
            Error::SearchTooLarge {
                size: 101f64.powf(10.0),
                limit: GRID_LIMIT
            }
        );
    }

    #[test]
    fn single_pure_point_vertex() {
        let d = FiniteDistribution::from_masses(vec![1.0], vec![ClassDistribution::one_hot(2, 0)])
            .unwrap();
        let v = vertex_oracle_optimum(&d, &MetricSpec::Plain(MetricId::Accuracy)).unwrap();
        assert_eq!(v.optimum_value, 1.0);
        assert_eq!(v.optimum_outputs, vec![vec![1.0, 0.0]]);
    }

    #[test]
    fn regret_examples() {
        let d = FiniteDistribution::coin_flip();
        let g = grid_oracle_optimum(&d, &MetricSpec::Plain(MetricId::HMean), 101).unwrap();
        assert_eq!(regret(&g, g.optimum_value).value, 0.0);
        assert!((regret(&g, 0.45).value - 0.05).abs() < 1e-12);
        let r = regret(&g, 0.6);
        assert!(r.truncated && r.value == 0.0);
        let c = d.conf_of_outputs(&g.optimum_outputs).unwrap();
        let achieved = eval_metric(MetricId::HMean, &c).unwrap();
        assert_eq!(regret(&g, achieved).value, 0.0);
    }
}
