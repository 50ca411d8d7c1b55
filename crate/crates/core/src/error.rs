use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in layer {layer}: {what}")]
    Numeric { layer: usize, what: String },

    #[error("quadrature produced a non-finite value: {0}")]
    Quadrature(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    #[error("renormalisation failed: class {class} has zero total weight in the batch")]
    Renormalisation { class: usize },

    #[error("no sign change of the score on [{lo:e}, {hi:e}]")]
    Divergence { lo: f64, hi: f64 },

    #[error("optimisation did not converge after {iterations} iterations (best point {best:?})")]
    Optimisation { iterations: usize, best: Vec<f64> },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("IDX parse error: {0}")]
    Idx(#[from] IdxError),

    #[error("undefined AUC: {0}")]
    UndefinedAuc(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// Distinct failure modes of the IDX reader.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("unknown magic number {0:#010x}")]
    UnknownMagic(u32),

    #[error("expected {expected} file, found magic {found:#010x}")]
    WrongKind { expected: &'static str, found: u32 },

    #[error("truncated header: {0} bytes")]
    TruncatedHeader(usize),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Coarse category, used for the CLI exit code.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) | Error::Shape(_) => 2,
            Error::Io { .. } | Error::Idx(_) | Error::Csv(_) => 3,
            Error::Training { .. } | Error::Renormalisation { .. } | Error::Numeric { .. } => 4,
            Error::Quadrature(_) => 5,
            Error::Divergence { .. }
            | Error::Optimisation { .. }
            | Error::Hypothesis(_)
            | Error::UndefinedAuc(_) => 5,
        }
    }
}
