use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LsmError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical fault: {0}")]
    Numerical(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, LsmError>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(LsmError::Config(msg.into()))
}
