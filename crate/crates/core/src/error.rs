use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("rank-deficient jacobian (row norm {norm:e})")]
    RankDeficient { norm: f64 },

    #[error("no bracket: endpoint values {fa} and {fb} have the same sign")]
    NoBracket { fa: f64, fb: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid label {label} for a model with {classes} classes")]
    InvalidLabel { label: i64, classes: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("size budget exceeded: {0}")]
    Budget(String),

    #[error("surface is not watertight: {0}")]
    NotWatertight(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used by the command line driver to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Budget(_) | Error::InvalidLabel { .. } => ErrorKind::Config,
            Error::Parse { .. }
            | Error::Format(_)
            | Error::Io { .. }
            | Error::Empty(_)
            | Error::NotWatertight(_)
            | Error::DimensionMismatch { .. } => ErrorKind::Data,
            Error::NonFinite(_)
            | Error::RankDeficient { .. }
            | Error::NoBracket { .. }
            | Error::Numerical(_) => ErrorKind::Numerical,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}
