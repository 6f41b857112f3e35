//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes are incompatible with the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An argument is outside its documented domain.
    #[error("argument error: {0}")]
    Argument(String),

    /// An API contract was violated (caller bug rather than bad data).
    #[error("contract error: {0}")]
    Contract(String),

    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A text asset failed to parse.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A glyph was requested that the font does not provide.
    #[error("glyph missing: {0:?}")]
    GlyphMissing(char),

    /// A checkpoint file failed checksum verification.
    #[error("corruption error: {0}")]
    Corruption(String),

    /// A checkpoint file has the wrong magic, version, or layout.
    #[error("format error: {0}")]
    Format(String),

    /// Training produced a non-finite loss and was aborted.
    #[error("training aborted: {0}")]
    Training(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
