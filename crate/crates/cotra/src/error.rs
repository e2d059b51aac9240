//! Crate-wide error type.

use std::path::PathBuf;

/// Errors raised by dataset handling, training, evaluation, and the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying I/O failure.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A dataset file record failed to parse or validate.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        /// 1-based line number of the offending record.
        line: usize,
        msg: String,
    },

    /// Dataset-level invariant violation (empty set, duplicate ids, ...).
    #[error("invalid dataset: {0}")]
    Dataset(String),

    /// A trajectory's vectors disagree with the dataset dimensions.
    #[error("dimension mismatch in trajectory {traj_id}: {msg}")]
    Dimension { traj_id: u64, msg: String },

    /// Contrastive construction failure.
    #[error("contrastive build failed: {0}")]
    Build(String),

    /// Configuration parse or validation failure.
    #[error("config error: {0}")]
    Config(String),

    /// Network-level failure: shape mismatch, gradient overflow, bad checkpoint.
    #[error("network error: {0}")]
    Net(String),

    /// Training failure (non-finite loss or gradient).
    #[error("training error: {0}")]
    Train(String),

    /// Evaluation failure.
    #[error("evaluation error: {0}")]
    Eval(String),

    /// A pipeline stage failed; carries the stage name and the cause.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// I/O failure tagged with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
