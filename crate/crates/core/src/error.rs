use thiserror::Error;

use crate::io::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample index {index} out of range for a track of {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid track: {0}")]
    InvalidTrack(String),

    #[error("invalid spring parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Format(#[from] FormatError),
}
