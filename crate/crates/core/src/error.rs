use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A path lands beyond the last channel tap.
    #[error("scene exceeds delay spread: {kind} path of {distance:.4} m maps to bin {bin} > L = {n_taps}")]
    DelaySpreadExceeded {
        kind: &'static str,
        distance: f64,
        bin: usize,
        n_taps: usize,
    },

    #[error("congested scene: no bin-resolvable placement of {targets} targets after {attempts} attempts")]
    CongestedScene { targets: usize, attempts: usize },

    #[error("solver did not converge after {iterations} iterations (optimality gap {gap:.3e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("inconsistent detection counts: {0}")]
    InconsistentDetections(String),

    #[error("no consistent association: {0}")]
    NoConsistentAssociation(String),

    #[error("localization failure: {0}")]
    LocalizationFailure(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
