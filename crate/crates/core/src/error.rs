use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariance matrix is not positive definite (Cholesky factorization failed)")]
    CholeskyFailure,

    #[error("precision matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not symmetric: relative asymmetry {0:.3e} exceeds 1e-10")]
    Asymmetric(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid Merton constants: {0}")]
    InvalidConstants(String),

    #[error("invalid frontier parameters: {0}")]
    InvalidParams(String),

    #[error("frontier slope is zero; only r = r_gmv lies on the frontier")]
    DegenerateSlope,

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("too few observations: {0}")]
    TooFewObservations(String),

    #[error("sample covariance is singular for p = {p}, n = {n}; this estimator requires n > p")]
    SingularCovariance { p: usize, n: usize },

    #[error("concentration ratio {0} is outside (0, 1)")]
    RatioOutOfRange(f64),

    #[error("trace of the sample covariance is zero")]
    ZeroTrace,

    #[error("level {0} is outside (0, 1)")]
    InvalidLevel(f64),

    #[error("root selection is ambiguous at z = {0}")]
    BranchAmbiguity(String),

    #[error("pole: x(z) = z at z = {0}")]
    PoleAtZ(String),

    #[error("sample matrix is singular: p = {p} must be smaller than n = {n}")]
    SingularMatrix { p: usize, n: usize },

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("GARCH stationarity violated for asset {asset}: alpha1 + beta1 = {persistence}")]
    StationarityViolation { asset: usize, persistence: f64 },

    #[error("histogram needs at least {required} replications, got {got}")]
    TooFewReps { required: usize, got: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("panel contains no usable rows")]
    EmptyPanel,

    #[error("timestamps are not strictly increasing at line {line}")]
    NonMonotoneTimestamps { line: usize },

    #[error("day {day} has {rows} rows, not divisible by block size {k}")]
    RaggedDay { day: String, rows: usize, k: usize },

    #[error("panel has {available} observations, window needs {required}")]
    WindowTooShort { available: usize, required: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse {
            line,
            message: e.to_string(),
        }
    }
}
