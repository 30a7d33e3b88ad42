use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{link} link: value {value} is outside its domain")]
    LinkDomain { link: &'static str, value: f64 },

    #[error("{family}: y = {y} is not strictly inside the support")]
    Support { family: &'static str, y: f64 },

    #[error("{family}: invalid parameter: {reason}")]
    InvalidParameter { family: &'static str, reason: String },

    #[error("configuration error at {path}: {reason}")]
    Config { path: String, reason: String },

    #[error("data generation failed: inverse link produced a non-finite location at eta = {eta}")]
    Generation { eta: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("{0}")]
    Empty(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record in {path} line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(family: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            family,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
