//! Conditional-gradient learners over the feasible confusion set. Each linear
//! step is a weighted-argmax plug-in; the iterate is a flat mixture with
//! step sizes `γ_j = 2/(j+1)`.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::confusion::{ClassDistribution, ConfusionMatrix, GainMatrix, LabeledSample};
use crate::cpe::{CpeSource, Scorer};
use crate::error::{Error, Result};
use crate::metrics::{eval_smoothed, grad_smoothed, SmoothedMetric};
use crate::plugin::{SplitConfig, TuningSet};
use crate::rule::{ClassifierRule, EnsembleMeta};
use crate::synth::FiniteDistribution;

/// Default iteration cap.
pub const DEFAULT_T_CAP: usize = 5000;

/// `T = min(κ·m, cap)`, at least 1.
pub fn iterations_for(m: usize, kappa: usize, cap: usize) -> usize {
    kappa.saturating_mul(m).min(cap).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CgConfig {
    pub iterations: usize,
    pub alpha: f64,
    pub seed: u64,
    pub record_trace: bool,
    /// Output of the constant starting rule; uniform when absent.
    pub initial: Option<ClassDistribution>,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            alpha: 0.5,
            seed: 0,
            record_trace: false,
            initial: None,
        }
    }
}

impl CgConfig {
    pub fn with_iterations(iterations: usize) -> Self {
        Self {
            iterations,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha = {} outside (0,1)",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// One CG step: the gain fed to the linear step (gradient at the previous
/// iterate) and the objective after the update.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub grad_linf: f64,
    pub gain: GainMatrix,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CgTrace {
    pub records: Vec<TraceRecord>,
}

impl CgTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with columns `iter,objective,grad_linf`, optionally preceded by
    /// `#`-prefixed comment lines.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for c in comments {
            let _ = writeln!(s, "# {c}");
        }
        s.push_str("iter,objective,grad_linf\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{}", r.iter, r.objective, r.grad_linf);
        }
        s
    }
}

/// Output of a CG run.
#[derive(Debug, Clone)]
pub struct CgResult {
    pub ensemble: ClassifierRule,
    pub trace: CgTrace,
    /// Confusion of the final iterate on the set the gradients were taken on.
    pub conf: ConfusionMatrix,
    pub objective: f64,
    /// Plug-in gains `G^1..G^T`.
    pub gains: Vec<GainMatrix>,
}

/// Closed-form weight of `u^j` in `h^T`: `2j / (T(T+1))`.
pub fn cg_weight(j: usize, t: usize) -> f64 {
    2.0 * j as f64 / (t as f64 * (t as f64 + 1.0))
}

/// Runs `T` CG iterations on `tuning`, using `scorer` for the plug-in steps.
pub fn cg_on(
    tuning: &TuningSet,
    scorer: Arc<Scorer>,
    sm: &SmoothedMetric,
    cfg: &CgConfig,
) -> Result<CgResult> {
    cfg.validate()?;
    let n = tuning.n();
    let t_max = cfg.iterations;
    let h0 = cfg
        .initial
        .clone()
        .unwrap_or_else(|| ClassDistribution::uniform(n));
    if h0.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: h0.n(),
        });
    }
    let mut conf = tuning.conf_of_constant(h0.as_slice());
    let mut gains = Vec::with_capacity(t_max);
    let mut trace = CgTrace::default();
    for j in 1..=t_max {
        let g = match grad_smoothed(sm, &conf) {
            Ok(g) => g,
            Err(Error::NonFinite { .. }) | Err(Error::SingularAtZeroRho { .. }) => {
                return Err(Error::NonFiniteGradient { iteration: j })
            }
            Err(e) => return Err(e),
        };
        let u = tuning.conf_of_gain(&g);
        let gamma = 2.0 / (j as f64 + 1.0);
        let e: Vec<f64> = conf
            .entries()
            .iter()
            .zip(u.entries())
            .map(|(a, b)| (1.0 - gamma) * a + gamma * b)
            .collect();
        conf = ConfusionMatrix::from_parts_unchecked(n, e);
        if cfg.record_trace {
            trace.records.push(TraceRecord {
                iter: j,
                objective: eval_smoothed(sm, &conf)?,
                grad_linf: g.linf(),
                gain: g.clone(),
            });
        }
        gains.push(g);
    }
    let weights = (1..=t_max).map(|j| cg_weight(j, t_max)).collect();
    let components = gains
        .iter()
        .map(|g| ClassifierRule::weighted_argmax(g.clone(), Arc::clone(&scorer)))
        .collect();
    let ensemble = ClassifierRule::Mixture {
        weights,
        components,
        meta: Some(EnsembleMeta {
            iterations: t_max,
            rho: sm.rho(),
            metric: sm.to_string(),
            seed: cfg.seed,
        }),
    };
    let objective = eval_smoothed(sm, &conf)?;
    Ok(CgResult {
        ensemble,
        trace,
        conf,
        objective,
        gains,
    })
}

/// Deterministic rule assigning each support point to
/// `argmax_y g_yᵀ η_k`, ties to the larger index.
pub fn exact_linear_max(g: &GainMatrix, dist: &FiniteDistribution) -> ClassifierRule {
    ClassifierRule::weighted_argmax(g.clone(), Arc::new(Scorer::finite_oracle(dist.clone())))
}

/// CG with exact gradients and exact linear maximization on a finite-support
/// distribution.
pub fn idealized_cg(
    dist: &FiniteDistribution,
    sm: &SmoothedMetric,
    cfg: &CgConfig,
) -> Result<CgResult> {
    let scorer = Arc::new(Scorer::finite_oracle(dist.clone()));
    let tuning = TuningSet::from_distribution(dist, &scorer)?;
    cg_on(&tuning, scorer, sm, cfg)
}

/// Sample-based CG: split, fit `η̂` on `S'`, take gradients at the empirical
/// confusion on `S''`.
pub fn bayescg(
    sample: &LabeledSample,
    sm: &SmoothedMetric,
    cfg: &CgConfig,
    cpe: &CpeSource,
) -> Result<CgResult> {
    cfg.validate()?;
    let split = SplitConfig {
        alpha: cfg.alpha,
        seed: cfg.seed,
    };
    let (s1, s2) = split.split(sample)?;
    let scorer = cpe.fit(&s1)?;
    let tuning = TuningSet::from_sample(&s2, &scorer)?;
    cg_on(&tuning, scorer, sm, cfg)
}

/// `2ε + 8β/(T+2)`.
pub fn cg_regret_bound(beta: f64, t: usize, epsilon: f64) -> f64 {
    2.0 * epsilon + 8.0 * beta / (t as f64 + 2.0)
}

/// Inputs of the regret bound for a smoothed surrogate of a non-smooth
/// metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonsmoothBoundInputs {
    pub theta: f64,
    pub lipschitz: f64,
    pub smoothness: f64,
    pub cpe_l1: f64,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub delta: f64,
    pub iterations: usize,
    /// Distribution-free constant of the uniform-convergence term.
    pub c: f64,
}

/// `4L·E‖η̂−η‖₁ + 4βn²C·√((n² ln n ln(αm) + ln(n²/δ))/(αm)) + 8β/(T+2) + 2θ`.
/// The uniform-convergence term is taken as 0 when `αm ≤ 1`.
pub fn nonsmooth_regret_bound(p: &NonsmoothBoundInputs) -> f64 {
    let nf = p.n as f64;
    let am = p.alpha * p.m as f64;
    let uc = if am > 1.0 && p.c > 0.0 {
        let inner = (nf * nf * nf.ln() * am.ln() + (nf * nf / p.delta).ln()) / am;
        4.0 * p.smoothness * nf * nf * p.c * inner.max(0.0).sqrt()
    } else {
        0.0
    };
    4.0 * p.lipschitz * p.cpe_l1
        + uc
        + cg_regret_bound(p.smoothness, p.iterations, 0.0)
        + 2.0 * p.theta
}
