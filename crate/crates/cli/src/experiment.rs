use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use nondecomp::oracle::{grid_oracle_optimum, regret, vertex_oracle_optimum};
use nondecomp::{eval_metric, exact_conf, Error, MetricSpec, OracleResult, Scorer, TuningSet};
use serde::Deserialize;

use crate::algo::{train_idealized, train_on_sample, AlgoParams, Algorithm, Objective};
use crate::dist::{Dist, DistRef};
use crate::error::{io_error, read_file, write_file, CliError, CliResult};

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment config JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Omit the timestamp line and wall times, making reruns byte-identical.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum OracleChoice {
    None,
    Grid {
        #[serde(default = "default_levels")]
        levels: usize,
    },
    Vertex,
}

fn default_levels() -> usize {
    101
}

impl Default for OracleChoice {
    fn default() -> Self {
        Self::Grid {
            levels: default_levels(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub distribution: DistRef,
    pub metric: String,
    pub algorithm: Algorithm,
    pub sample_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub params: AlgoParams,
    #[serde(default)]
    pub oracle: OracleChoice,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub traces: bool,
    /// Held-out size for continuous distributions.
    #[serde(default = "default_m_test")]
    pub m_test: usize,
    #[serde(default = "default_heldout_seed")]
    pub heldout_seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_m_test() -> usize {
    100_000
}

fn default_heldout_seed() -> u64 {
    0x5EED_0F4E1D
}

struct Row {
    m: usize,
    seed: u64,
    tuning_value: f64,
    exact_value: f64,
    exact_kind: &'static str,
    oracle: String,
    regret: String,
    wall_ms: Option<u128>,
    trace: String,
}

enum OracleOutcome {
    Absent,
    Skipped,
    Value(OracleResult),
}

/// Held-out points with the true conditional as their label masses.
struct HeldOut {
    features: Vec<Vec<f64>>,
    masses: Vec<Vec<f64>>,
}

pub fn experiment(a: ExperimentArgs) -> CliResult<()> {
    let cfg: ExperimentConfig =
        serde_json::from_str(&read_file(&a.config)?).map_err(|e| io_error(&a.config, e))?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let dist = cfg.distribution.clone().resolve(base)?;
    let n = dist.n();

    // Validate everything before running anything.
    let obj = Objective::parse(&cfg.metric, cfg.algorithm, n)?;
    if cfg.sample_sizes.is_empty() || cfg.seeds.is_empty() {
        return Err(CliError::Usage(
            "sample_sizes and seeds must be nonempty".into(),
        ));
    }
    if cfg.sample_sizes.contains(&0) {
        return Err(CliError::Usage("sample sizes must be positive".into()));
    }
    if cfg.algorithm == Algorithm::IdealizedCg {
        dist.finite()?;
    }
    if cfg.params.oracle_cpe && cfg.algorithm == Algorithm::IdealizedCg {
        return Err(CliError::Usage(
            "oracle_cpe does not apply to idealized-cg".into(),
        ));
    }
    let report_metric = MetricSpec::Plain(obj.base());

    let oracle = match (&dist, &cfg.oracle) {
        (Dist::Gaussian(_), _) | (_, OracleChoice::None) => OracleOutcome::Absent,
        (Dist::Finite(d), choice) => {
            let res = match choice {
                OracleChoice::Grid { levels } => grid_oracle_optimum(d, &report_metric, *levels),
                _ => vertex_oracle_optimum(d, &report_metric),
            };
            match res {
                Ok(r) => OracleOutcome::Value(r),
                Err(Error::SearchTooLarge { .. }) => OracleOutcome::Skipped,
                Err(e) => return Err(e.into()),
            }
        }
    };

    let held_out = match &dist {
        Dist::Gaussian(g) => {
            let s = g.sample(cfg.m_test, cfg.heldout_seed)?;
            let w = 1.0 / cfg.m_test as f64;
            let masses = s
                .features()
                .iter()
                .map(|x| Ok(g.eta(x)?.into_iter().map(|e| e * w).collect()))
                .collect::<Result<Vec<Vec<f64>>, Error>>()?;
            Some(HeldOut {
                features: s.features().to_vec(),
                masses,
            })
        }
        Dist::Finite(_) => None,
    };

    let out_dir = match &a.out_dir {
        Some(d) => d.clone(),
        None => base.join(&cfg.output_dir),
    };
    let mut sizes = cfg.sample_sizes.clone();
    sizes.sort_unstable();
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();

    let mut rows = Vec::new();
    for &m in &sizes {
        for &seed in &seeds {
            let start = Instant::now();
            let record =
                cfg.traces && matches!(cfg.algorithm, Algorithm::Bayescg | Algorithm::IdealizedCg);
            let trained = match (&obj, &dist) {
                (Objective::Smoothed(sm), Dist::Finite(d))
                    if cfg.algorithm == Algorithm::IdealizedCg =>
                {
                    train_idealized(sm, d, &cfg.params, m, seed, record)?
                }
                _ => {
                    let sample = dist.sample(m, seed)?;
                    let scorer = cfg.params.oracle_cpe.then(|| dist.oracle_scorer());
                    train_on_sample(
                        cfg.algorithm,
                        &obj,
                        &sample,
                        &cfg.params,
                        seed,
                        scorer,
                        record,
                    )?
                }
            };
            let (exact_value, exact_kind) = match (&dist, &held_out) {
                (Dist::Finite(d), _) => {
                    (report_metric.eval(&exact_conf(&trained.rule, d)?)?, "exact")
                }
                (Dist::Gaussian(_), Some(h)) => {
                    let scorer = rule_scorer(&trained.rule)
                        .ok_or_else(|| CliError::Usage("rule has no scorer".into()))?;
                    let set = TuningSet::from_features(&h.features, h.masses.clone(), scorer)?;
                    (
                        eval_metric(obj.base(), &set.conf_of_rule(&trained.rule)?)?,
                        "heldout-estimate",
                    )
                }
                (Dist::Gaussian(_), None) => unreachable!(),
            };
            let (oracle_col, regret_col) = match &oracle {
                OracleOutcome::Absent => (String::new(), String::new()),
                OracleOutcome::Skipped => ("oracle:skipped".to_string(), String::new()),
                OracleOutcome::Value(r) => (
                    r.optimum_value.to_string(),
                    regret(r, exact_value).value.to_string(),
                ),
            };
            let trace = match &trained.trace {
                Some(t) => {
                    let rel = PathBuf::from("traces").join(format!("m{m}_seed{seed}.csv"));
                    write_file(
                        &out_dir.join(&rel),
                        &t.to_csv(&[cfg.params.iteration_note(m)]),
                    )?;
                    rel.display().to_string()
                }
                None => String::new(),
            };
            rows.push(Row {
                m,
                seed,
                tuning_value: trained.tuning_value,
                exact_value,
                exact_kind,
                oracle: oracle_col,
                regret: regret_col,
                wall_ms: (!a.no_timestamp).then(|| start.elapsed().as_millis()),
                trace,
            });
        }
    }

    let mut csv = String::new();
    if !a.no_timestamp {
        csv.push_str(&format!(
            "# generated {}\n",
            chrono::Utc::now().to_rfc3339()
        ));
    }
    csv.push_str("m,seed,algorithm,metric,tuning_value,exact_value,exact_kind,oracle_value,regret,wall_ms,trace\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.m,
            r.seed,
            cfg.algorithm.name(),
            obj.base(),
            r.tuning_value,
            r.exact_value,
            r.exact_kind,
            r.oracle,
            r.regret,
            r.wall_ms.map(|v| v.to_string()).unwrap_or_default(),
            r.trace
        ));
    }
    let report = out_dir.join("report.csv");
    write_file(&report, &csv)?;
    println!("{}", report.display());
    Ok(())
}

/// The scorer behind a plug-in rule or the first component of a mixture.
fn rule_scorer(rule: &nondecomp::ClassifierRule) -> Option<&Scorer> {
    use nondecomp::ClassifierRule as R;
    match rule {
        R::WeightedArgmax { cpe, .. } | R::BinaryThreshold { cpe, .. } => Some(cpe),
        R::Mixture { components, .. } => components.iter().find_map(rule_scorer),
        R::Constant { .. } => None,
    }
}
