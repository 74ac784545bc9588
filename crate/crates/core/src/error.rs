use thiserror::Error;

/// Library-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    /// A text input could not be parsed. Carries the 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// An argument or data structure violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Input is structurally too degenerate for the operation (e.g. a graph
    /// with no edges fed to a spectral routine).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A dataset operation produced or received zero usable instances.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// A metric is undefined on the given inputs (e.g. AUC on one class).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// The operation only applies to a different model variant.
    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),

    /// Training produced non-finite values.
    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable category code used as the process exit code by the CLI.
    pub fn category_code(&self) -> i32 {
        match self {
            Error::Parse { .. } => 3,
            Error::Validation(_) => 4,
            Error::Io(_) => 5,
            Error::Divergence(_) => 6,
            Error::Degenerate(_) | Error::EmptyDataset(_) | Error::UndefinedMetric(_) => 7,
            Error::UnsupportedVariant(_) => 8,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
