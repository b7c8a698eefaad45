use std::path::PathBuf;

use thiserror::Error;

use crate::calibration::Channel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid node layout: {0}")]
    InvalidLayout(String),

    #[error("invalid link table: {0}")]
    InvalidLinks(String),

    #[error("invalid voxel grid: {0}")]
    InvalidGrid(String),

    #[error("channel {0} outside the IEEE 802.15.4 range 11..=26")]
    ChannelOutOfRange(i64),

    #[error("degenerate path-loss fit: {0}")]
    DegenerateFit(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("factorization of {what} failed ({diagnostics})")]
    Factorization { what: &'static str, diagnostics: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("variant {variant} cannot run: {reason}")]
    Variant { variant: String, reason: String },

    #[error("no calibration data for link {link} on channel {channel}")]
    Uncalibrated { link: usize, channel: Channel },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
