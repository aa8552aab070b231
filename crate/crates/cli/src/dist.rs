//! Distribution specs, given inline, by preset name, or as a JSON file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nondecomp::{FiniteDistribution, GaussianMixtureSpec, LabeledSample, Scorer};
use serde::{Deserialize, Serialize};

use crate::error::{io_error, parse_json, CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistSpec {
    Finite(FiniteDistribution),
    Gaussian(GaussianMixtureSpec),
    CoinFlip,
    RandomFinite { n: usize, k: usize, seed: u64 },
}

/// Reads a tagged spec, or an untagged finite (`points`) or Gaussian
/// (`means`) distribution.
fn spec_from_value(v: serde_json::Value) -> Result<DistSpec, String> {
    let field = |k: &str| v.get(k).is_some();
    let res = if field("kind") {
        serde_json::from_value(v)
    } else if field("points") {
        serde_json::from_value(v).map(DistSpec::Finite)
    } else if field("means") {
        serde_json::from_value(v).map(DistSpec::Gaussian)
    } else {
        return Err("expected a \"kind\", \"points\" or \"means\" field".into());
    };
    res.map_err(|e| e.to_string())
}

/// A distribution as it appears in an experiment config: a file path or an
/// inline spec.
#[derive(Debug, Clone, Deserialize)]
#[serde(transparent)]
pub struct DistRef(serde_json::Value);

#[derive(Debug, Clone)]
pub enum Dist {
    Finite(FiniteDistribution),
    Gaussian(GaussianMixtureSpec),
}

impl DistSpec {
    pub fn resolve(self) -> CliResult<Dist> {
        Ok(match self {
            Self::Finite(d) => Dist::Finite(d),
            Self::Gaussian(g) => {
                g.validate()?;
                Dist::Gaussian(g)
            }
            Self::CoinFlip => Dist::Finite(FiniteDistribution::coin_flip()),
            Self::RandomFinite { n, k, seed } => {
                Dist::Finite(FiniteDistribution::random(n, k, seed)?)
            }
        })
    }
}

impl DistRef {
    /// Relative paths are taken from `base`.
    pub fn resolve(self, base: &Path) -> CliResult<Dist> {
        match self.0 {
            serde_json::Value::String(p) => load_dist(&base.join(PathBuf::from(p))),
            v => spec_from_value(v)
                .map_err(|e| CliError::Data(format!("distribution: {e}")))?
                .resolve(),
        }
    }
}

pub fn load_dist(path: &Path) -> CliResult<Dist> {
    spec_from_value(parse_json(path)?)
        .map_err(|e| io_error(path, e))?
        .resolve()
}

/// A preset name (`coin-flip`, `gaussian`) or a JSON file path.
pub fn dist_from_arg(arg: &str) -> CliResult<Dist> {
    match arg {
        "coin-flip" => DistSpec::CoinFlip.resolve(),
        "gaussian" => DistSpec::Gaussian(GaussianMixtureSpec::default()).resolve(),
        path => load_dist(Path::new(path)),
    }
}

impl Dist {
    pub fn n(&self) -> usize {
        match self {
            Self::Finite(d) => d.n(),
            Self::Gaussian(g) => g.n(),
        }
    }

    pub fn sample(&self, m: usize, seed: u64) -> CliResult<LabeledSample> {
        Ok(match self {
            Self::Finite(d) => d.sample(m, seed)?,
            Self::Gaussian(g) => g.sample(m, seed)?,
        })
    }

    pub fn oracle_scorer(&self) -> Arc<Scorer> {
        Arc::new(match self {
            Self::Finite(d) => Scorer::finite_oracle(d.clone()),
            Self::Gaussian(g) => Scorer::gaussian_oracle(g.clone()),
        })
    }

    pub fn finite(&self) -> CliResult<&FiniteDistribution> {
        match self {
            Self::Finite(d) => Ok(d),
            Self::Gaussian(_) => Err(CliError::Usage(
                "this operation requires a finite-support distribution".into(),
            )),
        }
    }

    pub fn to_spec(&self) -> DistSpec {
        match self {
            Self::Finite(d) => DistSpec::Finite(d.clone()),
            Self::Gaussian(g) => DistSpec::Gaussian(g.clone()),
        }
    }
}
