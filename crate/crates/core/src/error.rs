use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic at byte offset 0: expected \"EMBF\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported EMBF version {version} at byte offset 4")]
    UnsupportedVersion { version: u8 },

    #[error("unknown dtype tag {tag} at byte offset 5")]
    UnknownDtype { tag: u8 },

    #[error("nonzero reserved byte at offset {offset}")]
    ReservedByte { offset: usize },

    #[error("truncated payload: header declares {expected} bytes, file ends at byte offset {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("trailing bytes after payload starting at byte offset {offset}")]
    TrailingBytes { offset: u64 },

    #[error("non-finite value {value} at byte offset {offset} (row {row}, col {col})")]
    NonFinite {
        value: f64,
        offset: u64,
        row: usize,
        col: usize,
    },

    #[error("non-finite value {value} at row {row}, col {col}")]
    NonFiniteEntry { value: f64, row: usize, col: usize },

    #[error("invalid label {value} at row {row}: labels must be exact non-negative integers")]
    InvalidLabel { value: f64, row: usize },

    #[error("label {label} at row {row} is out of range for {n_classes} classes")]
    LabelOutOfRange {
        label: usize,
        row: usize,
        n_classes: usize,
    },

    #[error("descriptor set: {0}")]
    DescriptorSet(String),

    #[error("descriptor JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("class {class} has {available} samples, needs {required}")]
    InsufficientSamples {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("zero row at index {row} cannot be normalized")]
    ZeroRow { row: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("feature space mismatch: weights are {weights}, features are {features}")]
    FeatureSpace { weights: String, features: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("all features are zero: lambda_max is 0 and the path is degenerate")]
    DegenerateFeatures,

    #[error("solver diverged (objective {objective}) with step size {step}")]
    Diverged { objective: f64, step: f64 },

    #[error("empty support mask")]
    EmptyMask,

    #[error("{}: {source}", path.display())]
    Input {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Cli(String),
}

impl Error {
    /// Attaches the offending file to a parse or validation error.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (Error::Io { .. } | Error::Input { .. }) => e,
            e => Error::Input {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
