// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset contains no interactions")]
    EmptyDataset,

    #[error("source and target domains share no users")]
    EmptyOverlap,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("training diverged in {stage} at {at}")]
    Divergence { stage: &'static str, at: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unknown user `{0}`")]
    UnknownUser(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("malformed embedding file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn check_dim(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }
}
