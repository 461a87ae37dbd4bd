use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt data: {0}")]
    Corrupt(String),
    #[error("invalid value: {0}")]
    Value(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no recognizable garment keyword in {0:?}")]
    UnknownGarment(String),
    #[error("unrecognized length anchor {0:?}")]
    UnknownAnchor(String),
    #[error("invalid anatomical range: {0}")]
    InvalidRange(String),
    #[error("degenerate (all-zero) attention map")]
    DegenerateMap,
    #[error("parameter out of range: {0}")]
    Param(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("edge selection region is empty")]
    EmptyRegion,
    #[error("no usable tokens: {0}")]
    NoTokens(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed or inconsistent inputs, as opposed
    /// to failures inside the pipeline itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Format(_)
                | Error::Corrupt(_)
                | Error::Value(_)
                | Error::Io { .. }
                | Error::Image(_)
                | Error::Json(_)
                | Error::UnknownGarment(_)
                | Error::UnknownAnchor(_)
                | Error::InvalidRange(_)
                | Error::Param(_)
                | Error::Shape(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
