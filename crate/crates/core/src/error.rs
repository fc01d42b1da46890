use std::path::{Path, PathBuf};

use thiserror::Error;

/// A file did not match its expected layout. `field` names the offending
/// header field or section (e.g. `"maxval"`, `"magic"`, `"truncated"`).
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("format error in {field}: {detail}")]
pub struct FormatError {
    pub field: String,
    pub detail: String,
}

impl FormatError {
    pub fn new(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            detail: detail.into(),
        }
    }
}

/// An I/O failure annotated with the path involved.
#[derive(Debug, Error)]
#[error("{}: {source}", path.display())]
pub struct PathIoError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

impl PathIoError {
    pub fn new(path: &Path, source: std::io::Error) -> Self {
        Self {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Crate-wide error, wrapping each stage's error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] PathIoError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Image(#[from] crate::imagecore::ImageError),
    #[error(transparent)]
    Spec(#[from] crate::synth::SpecError),
    #[error(transparent)]
    Segmentation(#[from] crate::segment::SegmentationError),
    #[error(transparent)]
    Model(#[from] crate::nnseg::NnError),
    #[error(transparent)]
    Normalization(#[from] crate::normalize::NormalizationError),
    #[error(transparent)]
    Encoding(#[from] crate::encode::EncodeError),
    #[error(transparent)]
    Matching(#[from] crate::matching::MatchError),
    #[error(transparent)]
    Quality(#[from] crate::quality::QualityError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable category, used by the CLI's error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Format(_) => "format",
            Error::Image(_) => "image",
            Error::Spec(_) => "spec",
            Error::Segmentation(_) => "segmentation",
            Error::Model(_) => "model",
            Error::Normalization(_) => "normalization",
            Error::Encoding(_) => "encoding",
            Error::Matching(_) => "matching",
            Error::Quality(_) => "quality",
            Error::Eval(_) => "eval",
            Error::Config(_) => "config",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
