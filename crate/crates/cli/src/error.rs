// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;
use tmcdr_core::Error as CoreError;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{} not found; {hint}", path.display())]
    Missing { path: PathBuf, hint: String },

    #[error("{0}")]
    Core(#[from] CoreError),
}

impl CliError {
    /// 1 usage or config, 2 data, 3 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Missing { .. } => 2,
            CliError::Core(e) => match e {
                CoreError::InvalidArgument(_) | CoreError::Unsupported(_) => 1,
                CoreError::Divergence { .. } | CoreError::NonFinite(_) => 3,
                _ => 2,
            },
        }
    }
}
