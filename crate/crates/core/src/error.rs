use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid penalty parameters: {0}")]
    InvalidPenalty(String),

    /// The closed-form prox left its range of validity.
    #[error("prox internal error at w={w}, beta={beta}, a={a}: {reason}")]
    Prox { w: f64, beta: f64, a: f64, reason: String },

    /// Prox failure inside a matrix, tagged with the entry location.
    #[error("prox failed at entry ({row}, {col}): {source}")]
    ProxAt {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid group partition: {0}")]
    Partition(String),

    #[error("shape mismatch in layer {layer}: expected {expected}, found {found}")]
    Shape {
        layer: usize,
        expected: String,
        found: String,
    },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid training configuration: {0}")]
    Config(String),

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("{path}: expected magic 0x{expected:08x}, found 0x{found:08x}")]
    IdxMagic { path: PathBuf, expected: u32, found: u32 },

    #[error("{path}: truncated or malformed IDX file ({detail})")]
    IdxLength { path: PathBuf, detail: String },

    #[error("IDX count mismatch: {images} images but {labels} labels")]
    IdxCount { images: usize, labels: usize },

    #[error("{path}:{line}: {message}")]
    Csv {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
