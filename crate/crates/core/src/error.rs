use std::path::PathBuf;

use ismo_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("generation error: {0}")]
    Generation(String),
    #[error("render error: {0}")]
    Render(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("numeric error in {location}: {detail}")]
    Numeric { location: String, detail: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFiles(Vec<PathBuf>),
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl CoreError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn numeric(location: impl Into<String>, detail: impl Into<String>) -> Self {
        Self::Numeric { location: location.into(), detail: detail.into() }
    }

    /// Short machine-readable category, used for CLI exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Self::Shape(_) => "shape",
            Self::Argument(_) => "argument",
            Self::Generation(_) => "generation",
            Self::Render(_) => "render",
            Self::Split(_) => "split",
            Self::Metric(_) => "metric",
            Self::Numeric { .. } => "numeric",
            Self::Config(_) => "config",
            Self::Io { .. } | Self::MissingFiles(_) | Self::Image { .. } => "io",
            Self::Nn(NnError::Io(_)) => "io",
            Self::Nn(NnError::Checkpoint(_)) => "checkpoint",
            Self::Nn(NnError::Shape(_)) => "shape",
        }
    }
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
