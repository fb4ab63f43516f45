use std::path::{Path, PathBuf};

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Core(#[from] lodestar_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use lodestar_core::Error as E;
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io { .. } | CliError::Data(_) => exit::DATA,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Core(E::EmptyInput | E::NoCorrespondences) => exit::NUMERICAL,
            CliError::Core(_) => exit::DATA,
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Prefixes the message with the file it concerns.
    pub fn in_file(self, path: impl AsRef<Path>) -> Self {
        match self {
            CliError::Io { .. } => self,
            other => {
                let code = other.exit_code();
                let msg = format!("{}: {other}", path.as_ref().display());
                match code {
                    exit::NUMERICAL => CliError::Numerical(msg),
                    exit::USAGE => CliError::Usage(msg),
                    _ => CliError::Data(msg),
                }
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn read_to_string(path: impl AsRef<Path>) -> Result<String> {
    std::fs::read_to_string(path.as_ref()).map_err(|e| CliError::io(path, e))
}

pub fn write(path: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path.as_ref(), contents).map_err(|e| CliError::io(path, e))
}

pub fn create_dir_all(path: impl AsRef<Path>) -> Result<()> {
    std::fs::create_dir_all(path.as_ref()).map_err(|e| CliError::io(path, e))
}
