use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A training group holds more tags than there are subchannels, so no
    /// assignment can satisfy the per-(m, c) uniqueness constraint.
    #[error("infeasible grouping: cell {core}, training group {group} has {size} tags but only {subchannels} subchannels")]
    Infeasible {
        core: usize,
        group: usize,
        size: usize,
        subchannels: usize,
    },

    #[error("infeasible group {group}: {size} tags but only {subchannels} subchannels")]
    InfeasibleGroup {
        group: usize,
        size: usize,
        subchannels: usize,
    },

    #[error("unsupported training set size {0}: must be a power of two")]
    UnsupportedSize(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("incomplete SINR table: tag {tag}, subchannel {subchannel} was never measured")]
    IncompleteTable { tag: usize, subchannel: usize },

    #[error("constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
