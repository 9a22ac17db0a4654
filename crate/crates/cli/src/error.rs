use std::path::{Path, PathBuf};

use gqnq::Error;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_DIMENSION: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// 1 usage or missing input, 2 unreadable or incompatible data,
    /// 3 numeric failure, 4 dimension mismatch.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::MissingFile(_) => EXIT_USAGE,
            CliError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_USAGE,
            CliError::Io { .. } => EXIT_DATA,
            CliError::Core(e) => match e {
                Error::InvalidParameter(_) | Error::Contract(_) | Error::Capacity(_) => EXIT_USAGE,
                Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_USAGE,
                Error::Version { .. } | Error::Format(_) | Error::Io(_) | Error::Json(_) => EXIT_DATA,
                Error::Numeric(_) | Error::Truncation(_) => EXIT_NUMERIC,
                Error::ShapeMismatch { .. } | Error::Dimension(_) => EXIT_DIMENSION,
            },
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

pub fn require(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingFile(path.to_path_buf()))
    }
}

pub fn read_input(path: &Path) -> Result<String, CliError> {
    require(path)?;
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}
