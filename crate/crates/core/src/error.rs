use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported hidden activation `{activation}` in layer {layer}")]
    UnsupportedActivation { layer: usize, activation: String },

    #[error("sample-size iteration did not converge after {0} steps")]
    NonConvergence(usize),

    #[error("invalid bounds: {0}")]
    Bounds(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("cannot sketch an empty active set (unfiltered dead neuron?)")]
    EmptySet,

    #[error("sketches come from different hash families: {0}")]
    FamilyMismatch(String),

    #[error("index {index} out of range for {len} rows")]
    Index { index: usize, len: usize },

    #[error("cost matrix has no rows or no columns")]
    EmptyMatrix,

    #[error("matching has no pairs")]
    EmptyMatching,

    #[error("degenerate training data: {0}")]
    DegenerateData(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
