use std::sync::Arc;

use clap::ValueEnum;
use nondecomp::cg::{iterations_for, CgTrace, DEFAULT_T_CAP};
use nondecomp::{
    bayescg, binary_threshold_plugin, brute_force_plugin, empirical_conf, eval_metric, exact_conf,
    idealized_cg, CgConfig, ClassifierRule, CpeSource, CpeTrainConfig, FiniteDistribution,
    GainGridConfig, LabeledSample, MetricId, MetricSpec, Scorer, SmoothedMetric, SplitConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    BinaryPlugin,
    BrutePlugin,
    Bayescg,
    IdealizedCg,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::BinaryPlugin => "binary-plugin",
            Self::BrutePlugin => "brute-plugin",
            Self::Bayescg => "bayescg",
            Self::IdealizedCg => "idealized-cg",
        }
    }

    fn is_cg(self) -> bool {
        matches!(self, Self::Bayescg | Self::IdealizedCg)
    }
}

/// A metric string checked against an algorithm and class count.
#[derive(Debug, Clone)]
pub enum Objective {
    Plain(MetricId),
    Spec(MetricSpec),
    Smoothed(SmoothedMetric),
}

impl Objective {
    pub fn parse(metric: &str, algo: Algorithm, n: usize) -> CliResult<Self> {
        let obj = if algo.is_cg() {
            let sm: SmoothedMetric = metric.parse()?;
            Self::Smoothed(sm)
        } else {
            let spec: MetricSpec = metric.parse()?;
            match (algo, spec) {
                (Algorithm::BinaryPlugin, MetricSpec::Plain(id)) => Self::Plain(id),
                (Algorithm::BinaryPlugin, MetricSpec::Smoothed(_)) => {
                    return Err(CliError::Usage(
                        "binary-plugin takes an unsmoothed metric".into(),
                    ))
                }
                (_, spec) => Self::Spec(spec),
            }
        };
        if algo == Algorithm::BinaryPlugin && n != 2 {
            return Err(CliError::Usage(format!(
                "binary-plugin requires n=2 (data has n = {n})"
            )));
        }
        obj.base().check_n(n)?;
        Ok(obj)
    }

    pub fn base(&self) -> MetricId {
        match self {
            Self::Plain(id) => *id,
            Self::Spec(s) => s.base(),
            Self::Smoothed(sm) => sm.base(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgoParams {
    pub alpha: f64,
    /// Fixed CG iteration count; otherwise `min(kappa·m, t_cap)`.
    pub iterations: Option<usize>,
    pub kappa: usize,
    pub t_cap: usize,
    pub grid_levels: usize,
    pub max_candidates: usize,
    pub cpe: CpeTrainConfig,
    pub standardize: bool,
    /// Use the true conditional of the generating distribution as `η̂`.
    pub oracle_cpe: bool,
}

impl Default for AlgoParams {
    fn default() -> Self {
        let grid = GainGridConfig::default();
        Self {
            alpha: 0.5,
            iterations: None,
            kappa: 1,
            t_cap: DEFAULT_T_CAP,
            grid_levels: grid.per_entry_levels,
            max_candidates: grid.max_candidates,
            cpe: CpeTrainConfig::default(),
            standardize: false,
            oracle_cpe: false,
        }
    }
}

impl AlgoParams {
    pub fn iterations(&self, m: usize) -> usize {
        self.iterations
            .unwrap_or_else(|| iterations_for(m, self.kappa, self.t_cap))
    }

    pub fn iteration_note(&self, m: usize) -> String {
        match self.iterations {
            Some(t) => format!("T = {t} (fixed)"),
            None => format!(
                "T = min(kappa*m, t_cap) = min({}*{m}, {}) = {}",
                self.kappa,
                self.t_cap,
                self.iterations(m)
            ),
        }
    }
}

pub struct Trained {
    pub rule: ClassifierRule,
    /// Unsmoothed metric on the tuning split, or on `D` for idealized CG.
    pub tuning_value: f64,
    /// Smoothed objective reached by CG.
    pub objective: Option<f64>,
    pub trace: Option<CgTrace>,
}

/// Runs a sample-based algorithm. `oracle` supplies `η̂` when
/// `params.oracle_cpe` is set.
pub fn train_on_sample(
    algo: Algorithm,
    obj: &Objective,
    sample: &LabeledSample,
    params: &AlgoParams,
    seed: u64,
    oracle: Option<Arc<Scorer>>,
    record_trace: bool,
) -> CliResult<Trained> {
    let cpe = match (params.oracle_cpe, oracle) {
        (true, Some(s)) => CpeSource::Fixed(s),
        (true, None) => {
            return Err(CliError::Usage(
                "oracle CPE needs a generating distribution".into(),
            ))
        }
        (false, _) if params.standardize => CpeSource::TrainStandardized(params.cpe.clone()),
        (false, _) => CpeSource::Train(params.cpe.clone()),
    };
    let split = SplitConfig {
        alpha: params.alpha,
        seed,
    };
    let tuning_value = |rule: &ClassifierRule| -> CliResult<f64> {
        let (_, s2) = split.split(sample)?;
        Ok(eval_metric(obj.base(), &empirical_conf(rule, &s2)?)?)
    };
    match (algo, obj) {
        (Algorithm::BinaryPlugin, Objective::Plain(id)) => {
            let (rule, _) = binary_threshold_plugin(sample, *id, &split, &cpe)?;
            Ok(Trained {
                tuning_value: tuning_value(&rule)?,
                rule,
                objective: None,
                trace: None,
            })
        }
        (Algorithm::BrutePlugin, Objective::Spec(spec)) => {
            let grid = GainGridConfig {
                per_entry_levels: params.grid_levels,
                max_candidates: params.max_candidates,
                seed,
            };
            let (rule, _) = brute_force_plugin(sample, spec, &split, &grid, &cpe)?;
            Ok(Trained {
                tuning_value: tuning_value(&rule)?,
                rule,
                objective: None,
                trace: None,
            })
        }
        (Algorithm::Bayescg, Objective::Smoothed(sm)) => {
            let cfg = CgConfig {
                iterations: params.iterations(sample.len()),
                alpha: params.alpha,
                seed,
                record_trace,
                initial: None,
            };
            let res = bayescg(sample, sm, &cfg, &cpe)?;
            Ok(Trained {
                tuning_value: eval_metric(sm.base(), &res.conf)?,
                rule: res.ensemble,
                objective: Some(res.objective),
                trace: record_trace.then_some(res.trace),
            })
        }
        (Algorithm::IdealizedCg, _) => Err(CliError::Usage(
            "idealized-cg runs on a finite-support distribution, not a sample".into(),
        )),
        _ => Err(CliError::Usage(format!(
            "metric does not suit {}",
            algo.name()
        ))),
    }
}

/// Idealized CG with `m` setting the iteration budget.
pub fn train_idealized(
    sm: &SmoothedMetric,
    dist: &FiniteDistribution,
    params: &AlgoParams,
    m: usize,
    seed: u64,
    record_trace: bool,
) -> CliResult<Trained> {
    let cfg = CgConfig {
        iterations: params.iterations(m),
        alpha: params.alpha,
        seed,
        record_trace,
        initial: None,
    };
    let res = idealized_cg(dist, sm, &cfg)?;
    Ok(Trained {
        tuning_value: eval_metric(sm.base(), &exact_conf(&res.ensemble, dist)?)?,
        rule: res.ensemble,
        objective: Some(res.objective),
        trace: record_trace.then_some(res.trace),
    })
}
