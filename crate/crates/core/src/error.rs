use std::path::PathBuf;

/// Errors produced by depthbench operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no valid pixels in the shared mask")]
    EmptyMask,

    #[error("non-positive depth {value} at pixel {index} where a log is required")]
    NonPositiveDepth { index: usize, value: f64 },

    #[error("invalid depth {value} at pixel {index}: {reason}")]
    InvalidDepth {
        index: usize,
        value: f64,
        reason: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient geometry: {0}")]
    InsufficientGeometry(String),

    #[error("block is not collapsible: {0}")]
    NotCollapsible(String),

    #[error("graph validation failed at node `{node}`: {reason}")]
    Graph { node: String, reason: String },

    #[error("weight store: {0}")]
    Weights(String),

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn graph(node: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Graph {
            node: node.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for failures that originate in a model description or its weights
    /// rather than in input data.
    pub fn is_model_error(&self) -> bool {
        matches!(
            self,
            Error::Graph { .. } | Error::Weights(_) | Error::NotCollapsible(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
