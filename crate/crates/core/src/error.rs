//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two containers that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A pixelwise metric was asked for but no pixel is valid in both masks.
    #[error("no jointly valid pixels")]
    EmptyOverlap,

    /// PFM header could not be parsed (bad magic, dims or scale line).
    #[error("pfm header: {0}")]
    PfmHeader(String),

    /// PFM dims line declared a zero-sized image.
    #[error("pfm header declares zero dimensions")]
    PfmZeroDims,

    /// PFM payload shorter than the header promises.
    #[error("pfm payload truncated: expected {expected} bytes, got {actual}")]
    PfmTruncated { expected: usize, actual: usize },

    /// Manifest line did not match `left<TAB>right<TAB>gt<TAB>tag`.
    #[error("manifest line {line}: {msg}")]
    ManifestParse { line: usize, msg: String },

    /// A path named in a manifest does not exist on disk.
    #[error("missing file: {0}")]
    MissingPath(PathBuf),

    /// A draw-log line did not match the documented record layout.
    #[error("draw log line {line}: {msg}")]
    DrawLogParse { line: usize, msg: String },

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
