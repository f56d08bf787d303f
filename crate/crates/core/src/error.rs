use std::path::PathBuf;

/// Errors raised across the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid Pauli string: {0}")]
    InvalidPauli(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("qubit count mismatch: expected {expected}, found {found}")]
    QubitMismatch { expected: usize, found: usize },
    #[error("{what} supports at most {max} qubits, got {requested}")]
    TooManyQubits {
        what: &'static str,
        max: usize,
        requested: usize,
    },
    #[error("matrix is not Hermitian (max residual {residual:.3e})")]
    NotHermitian { residual: f64 },
    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),
    #[error("channel is not trace preserving (max residual {residual:.3e})")]
    NotTracePreserving { residual: f64 },
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("{name} = {value} is not a probability")]
    InvalidProbability { name: String, value: f64 },
    #[error("invalid confusion matrix: {0}")]
    InvalidConfusion(String),
    #[error("LFSR state must be nonzero")]
    ZeroSeed,
    #[error("invalid LFSR configuration: {0}")]
    InvalidLfsr(String),
    #[error("no shots supplied")]
    EmptyShots,
    #[error("need at least {needed} shots, got {got}")]
    TooFewShots { needed: usize, got: usize },
    #[error("the all-identity mask has no nontrivial suppression")]
    IdentityMask,
    #[error("outcome probability {0} outside [0, 1]; channel is broken")]
    ProbabilityOutOfRange(f64),
    #[error("suppression for {term} is {suppression:.4}, below floor {floor}")]
    Unmitigable { term: String, suppression: f64, floor: f64 },
    #[error("suppression factor is zero")]
    ZeroSuppression,
    #[error("mask {0} is not present in the suppression table")]
    MissingMask(String),
    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),
    #[error("incompatible plans: {0}")]
    IncompatiblePlans(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
