use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("power iteration did not converge after {iterations} iterations (estimate {estimate})")]
    NonConvergence { iterations: usize, estimate: f64 },

    #[error("Gram matrix is numerically singular at pivot {pivot} (value {value:e})")]
    SingularGram { pivot: usize, value: f64 },

    #[error("active-set NNLS exceeded {limit} cycles")]
    IterationLimit { limit: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cannot draw {n} distinct basis vectors in dimension {d}")]
    TooManyExamples { n: usize, d: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad IDX magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("IDX file {path} is truncated")]
    TruncatedFile { path: PathBuf },

    #[error("no example of class {class} found")]
    ClassNotFound { class: u8 },

    #[error("training diverged at step {step}: non-finite weight")]
    DivergenceDetected { step: usize },

    #[error("decomposition tracker expected step {expected}, got {got}")]
    OrderingViolation { expected: usize, got: usize },

    #[error("sign structure violated at (j={j}, r={r}, i={i}): rho = {value:e}")]
    SignStructureViolation { j: i8, r: usize, i: usize, value: f64 },

    #[error("matrix is identically zero")]
    ZeroMatrix,

    #[error("weights are identically zero")]
    ZeroWeights,

    #[error("loss derivative {value} at index {index} is not strictly negative")]
    NonNegativeDeriv { index: usize, value: f64 },

    #[error("trajectory window too short: {0}")]
    InsufficientWindow(String),

    #[error("parameter order violated: need b > a > 0, got a={a}, b={b}")]
    ParameterOrder { a: f64, b: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
