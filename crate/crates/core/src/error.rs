//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Sizes do not fit together (ribbon outside grid, mismatched fields, ...).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A numeric argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration or scene description is self-inconsistent.
    #[error("validation error: {0}")]
    Validation(String),

    /// Degenerate geometry (coincident nodes, zero-length segments, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A file could not be parsed; the message carries the position.
    #[error("{path}: {message}")]
    Format { path: String, message: String },

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// PNG encode/decode failure.
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    /// An error wrapped with the pipeline stage it occurred in.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach a pipeline stage label to an error.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
