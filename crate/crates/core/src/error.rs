use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// I/O error annotated with the path it concerns.
    pub fn io_at(path: &std::path::Path, e: io::Error) -> Self {
        Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }
}
