use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stage an error originated from, used to attribute failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Nfst,
    Kernel,
    Nkmmc,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Nfst => "nfst",
            Stage::Kernel => "kernel",
            Stage::Nkmmc => "nkmmc",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("metric matrix is not positive definite (pivot {pivot} at index {index}); regularize before solving")]
    SingularMetric { index: usize, pivot: f64 },

    #[error("within-class scatter is singular; use a positive ridge")]
    SingularMatrix,

    #[error("no null projecting direction found: within-class scatter is full rank on the data span; fall back to MMC on the raw features")]
    NoNullspace,

    #[error("no positive eigenvalue: data shows no separable class structure")]
    EmptyDiscriminant,

    #[error("all points coincide: kernel width would be zero")]
    ZeroWidth,

    #[error("evaluation protocol: {0}")]
    Protocol(String),

    #[error("model file: field `{field}`: {msg}")]
    Model { field: String, msg: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at_stage(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn model(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Model {
            field: field.into(),
            msg: msg.into(),
        }
    }

    /// The innermost error, skipping stage and trial wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Trial { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
