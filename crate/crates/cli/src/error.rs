use std::path::Path;

use diffusion_core::Error;

/// Failure of a command, carrying its exit code class.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    /// Core error with the file (and line, for parse errors) it came from.
    pub fn core(context: &str, e: Error) -> Self {
        let msg = match &e {
            Error::Parse { line, message } => format!("{context}:{line}: {message}"),
            _ => format!("{context}: {e}"),
        };
        if e.is_numerical() {
            CliError::Numerical(msg)
        } else {
            CliError::Data(msg)
        }
    }
}
