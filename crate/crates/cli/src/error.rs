use std::path::Path;

use laplace_ode::Error as CoreError;
use thiserror::Error;

pub const EXIT_STRUCTURE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("reference run failed: {0}")]
    Reference(CoreError),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// Process exit status: 2 structure or schema, 3 solver, 4 I/O, 64 usage.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Reference(_) => EXIT_SOLVER,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => match e.root() {
                CoreError::Structure(_) | CoreError::Schema { .. } | CoreError::Dimension(_) => EXIT_STRUCTURE,
                CoreError::Io(_) => EXIT_IO,
                _ => EXIT_SOLVER,
            },
        }
    }
}
