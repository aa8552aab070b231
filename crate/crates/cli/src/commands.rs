use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use nondecomp::metrics::{eval_smoothed, grad_smoothed};
use nondecomp::oracle::{grid_oracle_optimum, vertex_oracle_optimum};
use nondecomp::{
    empirical_conf, ClassifierRule, ConfusionMatrix, FiniteDistribution, MetricId, MetricSpec,
    SmoothedMetric,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::algo::{train_idealized, train_on_sample, AlgoParams, Algorithm, Objective};
use crate::data::{read_dataset, write_dataset};
use crate::dist::dist_from_arg;
use crate::error::{read_file, write_file, CliError, CliResult};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub algo: Algorithm,
    /// Metric name, with `:rho=<v>` for the smoothed surrogate.
    #[arg(long)]
    pub metric: String,
    /// Training CSV (`f1,…,fd,label`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Distribution JSON or preset (`coin-flip`, `gaussian`). Required by
    /// idealized-cg and by --oracle-cpe.
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CG iterations; defaults to min(kappa·m, t-cap).
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub kappa: usize,
    #[arg(long, default_value_t = nondecomp::cg::DEFAULT_T_CAP)]
    pub t_cap: usize,
    #[arg(long, default_value_t = 5)]
    pub grid_levels: usize,
    #[arg(long, default_value_t = 20_000)]
    pub max_candidates: usize,
    /// Standardize features before fitting the CPE.
    #[arg(long)]
    pub standardize: bool,
    /// Use the true conditional of --dist instead of a fitted CPE.
    #[arg(long)]
    pub oracle_cpe: bool,
    /// Number of classes, when the data may not show every label.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Write the CG objective trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

pub fn train(a: TrainArgs) -> CliResult<()> {
    let params = AlgoParams {
        alpha: a.alpha,
        iterations: a.iterations,
        kappa: a.kappa,
        t_cap: a.t_cap,
        grid_levels: a.grid_levels,
        max_candidates: a.max_candidates,
        standardize: a.standardize,
        oracle_cpe: a.oracle_cpe,
        ..Default::default()
    };
    let dist = a.dist.as_deref().map(dist_from_arg).transpose()?;
    let record = a.trace.is_some();
    let (trained, m) = if a.algo == Algorithm::IdealizedCg {
        let dist = dist.ok_or_else(|| CliError::Usage("idealized-cg requires --dist".into()))?;
        let finite = dist.finite()?;
        let Objective::Smoothed(sm) = Objective::parse(&a.metric, a.algo, finite.n())? else {
            unreachable!()
        };
        let m = a.iterations.unwrap_or(1000);
        (train_idealized(&sm, finite, &params, m, a.seed, record)?, m)
    } else {
        let data = a
            .data
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("{} requires --data", a.algo.name())))?;
        let sample = read_dataset(data, a.classes)?;
        let obj = Objective::parse(&a.metric, a.algo, sample.n())?;
        let oracle = dist.as_ref().map(|d| d.oracle_scorer());
        let t = train_on_sample(a.algo, &obj, &sample, &params, a.seed, oracle, record)?;
        (t, sample.len())
    };
    let json = trained
        .rule
        .to_json()
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_file(&a.out, &json)?;
    if let (Some(path), Some(trace)) = (&a.trace, &trained.trace) {
        write_file(path, &trace.to_csv(&[params.iteration_note(m)]))?;
    }
    let objective = trained
        .objective
        .map(|v| format!(", smoothed objective {v}"))
        .unwrap_or_default();
    let scope = if a.algo == Algorithm::IdealizedCg {
        "exact"
    } else {
        "on tuning split"
    };
    println!(
        "{} {}: {} {scope}{objective}",
        a.algo.name(),
        a.metric,
        trained.tuning_value
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated metrics; every metric valid for the class count when
    /// omitted.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<String>,
}

pub fn eval(a: EvalArgs) -> CliResult<()> {
    let rule = ClassifierRule::from_json(&read_file(&a.model)?)?;
    let n = rule.n_classes();
    let sample = read_dataset(&a.data, None)?;
    if sample.n() > n {
        return Err(CliError::Usage(format!(
            "dataset has {} classes but the model has {n}",
            sample.n()
        )));
    }
    let sample = read_dataset(&a.data, Some(n))?;
    let conf = empirical_conf(&rule, &sample)?;
    let mut metrics = BTreeMap::new();
    if a.metrics.is_empty() {
        for id in MetricId::ALL.into_iter().filter(|id| id.check_n(n).is_ok()) {
            metrics.insert(
                id.name().to_string(),
                MetricSpec::Plain(id).eval(&conf).ok(),
            );
        }
    } else {
        for name in &a.metrics {
            let spec: MetricSpec = name.parse()?;
            spec.check_n(n)?;
            metrics.insert(name.clone(), spec.eval(&conf).ok());
        }
    }
    let out = json!({
        "n": n,
        "m": sample.len(),
        "confusion": conf.to_rows(),
        "metrics": metrics,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&out).expect("serializable")
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    SignFlip,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_delimiter = ',', default_values = ["hmean", "qmean", "gmean"])]
    pub metrics: Vec<MetricId>,
    #[arg(long = "n", value_delimiter = ',', default_values_t = [2usize, 4])]
    pub classes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.01])]
    pub rho: Vec<f64>,
    /// Random interior confusion matrices per (metric, n, rho).
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corrupts the analytic gradient, for testing the checker itself.
    #[arg(long, value_enum, hide = true)]
    pub inject_fault: Option<Fault>,
}

/// Worst relative ℓ∞ error between the analytic gradient and central
/// differences, over raw entries and row-preserving directions.
fn fd_error(
    sm: &SmoothedMetric,
    c: &ConfusionMatrix,
    h: f64,
    fault: Option<Fault>,
) -> CliResult<f64> {
    let n = c.n();
    let mut g = grad_smoothed(sm, c)?.entries().to_vec();
    if fault == Some(Fault::SignFlip) {
        g.iter_mut().for_each(|v| *v = -*v);
    }
    let scale = g
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let f =
        |e: Vec<f64>| -> CliResult<f64> { Ok(eval_smoothed(sm, &ConfusionMatrix::raw(n, e)?)?) };
    let mut worst: f64 = 0.0;
    for u in 0..n {
        for v in 0..n {
            let k = u * n + v;
            let mut dirs = vec![(vec![(k, 1.0)], g[k])];
            if u != v {
                let kk = u * n + u;
                dirs.push((vec![(k, 1.0), (kk, -1.0)], g[k] - g[kk]));
            }
            for (dir, analytic) in dirs {
                let mut p = c.entries().to_vec();
                let mut q = c.entries().to_vec();
                for &(i, s) in &dir {
                    p[i] += s * h;
                    q[i] -= s * h;
                }
                let fd = (f(p)? - f(q)?) / (2.0 * h);
                worst = worst.max((fd - analytic).abs() / scale);
            }
        }
    }
    Ok(worst)
}

pub fn gradcheck(a: GradcheckArgs) -> CliResult<()> {
    println!("metric,cases,max_rel_error,tolerance,pass");
    let mut failed = Vec::new();
    for &base in &a.metrics {
        let mut worst: f64 = 0.0;
        let mut cases = 0;
        for &n in &a.classes {
            let dist = FiniteDistribution::random(n, 6, a.seed.wrapping_add(n as u64))?;
            for &rho in &a.rho {
                let sm = SmoothedMetric::new(base, rho)?;
                let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
                for _ in 0..a.samples {
                    let c = dist.random_feasible_conf(&mut rng);
                    worst = worst.max(fd_error(&sm, &c, a.step, a.inject_fault)?);
                    cases += 1;
                }
            }
        }
        let pass = worst <= a.tolerance;
        if !pass {
            failed.push(base.name());
        }
        println!("{},{cases},{worst:e},{:e},{pass}", base.name(), a.tolerance);
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "gradient check failed for {}",
            failed.join(", ")
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    Grid,
    Vertex,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Finite-support distribution JSON, or `coin-flip`.
    #[arg(long)]
    pub dist: String,
    #[arg(long)]
    pub metric: String,
    #[arg(long, value_enum, default_value_t = OracleKind::Grid)]
    pub method: OracleKind,
    /// Grid points per output coordinate.
    #[arg(long, default_value_t = 101)]
    pub levels: usize,
}

pub fn oracle(a: OracleArgs) -> CliResult<()> {
    let dist = dist_from_arg(&a.dist)?;
    let finite = dist.finite()?;
    let metric: MetricSpec = a.metric.parse()?;
    metric.check_n(finite.n())?;
    let res = match a.method {
        OracleKind::Grid => grid_oracle_optimum(finite, &metric, a.levels)?,
        OracleKind::Vertex => vertex_oracle_optimum(finite, &metric)?,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&res).expect("serializable")
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Distribution JSON, or preset `coin-flip`, `gaussian`, `random-finite`.
    #[arg(long, default_value = "gaussian")]
    pub dist: String,
    /// Classes and support size for `random-finite`.
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample CSV to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the distribution itself as JSON.
    #[arg(long)]
    pub dist_out: Option<PathBuf>,
}

pub fn synth(a: SynthArgs) -> CliResult<()> {
    if a.out.is_none() && a.dist_out.is_none() {
        return Err(CliError::Usage(
            "synth needs --out and/or --dist-out".into(),
        ));
    }
    let dist = if a.dist == "random-finite" {
        crate::dist::DistSpec::RandomFinite {
            n: a.n,
            k: a.k,
            seed: a.seed,
        }
        .resolve()?
    } else {
        dist_from_arg(&a.dist)?
    };
    if let Some(path) = &a.dist_out {
        let json = serde_json::to_string_pretty(&dist.to_spec()).expect("serializable");
        write_file(path, &json)?;
    }
    if let Some(path) = &a.out {
        write_dataset(path, &dist.sample(a.m, a.seed)?)?;
    }
    Ok(())
}
