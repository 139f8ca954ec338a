use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the segmentation and narration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value in {tensor} at index {index}")]
    NonFinite { tensor: String, index: usize },

    #[error("validation error at `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Diverged { iteration: usize, loss: f64 },

    #[error("adapter error ({kind}): {message}")]
    Adapter { kind: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable category, used by the CLI and service error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::NonFinite { .. } => "numeric",
            Error::Validation { .. } => "validation",
            Error::Parse { .. } => "parse",
            Error::Dataset(_) => "dataset",
            Error::NotFound(_) => "not_found",
            Error::Diverged { .. } => "diverged",
            Error::Adapter { .. } => "adapter",
            Error::Io { .. } => "io",
            Error::Image(_) => "image",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
