use std::path::Path;

/// CLI failure, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// A check ran and failed. Exit code 1.
    #[error("{0}")]
    Verification(String),
    /// Bad flags, incompatible metric/algorithm, mismatched shapes. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Unreadable files or malformed data. Exit code 3.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Verification(_) => 1,
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
        }
    }
}

impl From<nondecomp::Error> for CliError {
    fn from(e: nondecomp::Error) -> Self {
        use nondecomp::Error as E;
        let msg = e.to_string();
        match e {
            E::EmptySample
            | E::InvalidLabel { .. }
            | E::NotSimplex { .. }
            | E::InvalidConfusion(_)
            | E::NonFinite { .. }
            | E::UnknownSupportPoint
            | E::InvalidDistribution(_) => Self::Data(msg),
            E::NonFiniteGradient { .. } => Self::Verification(msg),
            E::DimensionMismatch { .. }
            | E::ClassCount(_)
            | E::RequiresBinary { .. }
            | E::SingularAtZeroRho { .. }
            | E::AmsUndefined
            | E::NoPublishedXi(_)
            | E::UnknownMetric(_)
            | E::InvalidParameter(_)
            | E::SearchTooLarge { .. }
            | E::ZeroPriorClass { .. } => Self::Usage(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

pub fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_file(path)?).map_err(|e| io_error(path, e))
}
