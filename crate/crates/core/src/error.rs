use thiserror::Error;

/// Every failure the toolkit can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("probability {value} at ({row}, {col}) is outside [0, 1]")]
    ProbabilityOutOfRange { row: usize, col: usize, value: f64 },
    #[error("utility {value} at ({row}, {col}) is negative or not finite")]
    NegativeUtility { row: usize, col: usize, value: f64 },
    #[error("row {row} of P sums to {sum}, expected 1")]
    RowSumViolation { row: usize, sum: f64 },
    #[error("invalid ranking: {0}")]
    InvalidRanking(String),
    #[error("invalid fractional assignment: {0}")]
    InvalidAssignment(String),
    #[error("invalid fairness specification: {0}")]
    InvalidSpec(String),
    #[error("group {0} has size zero")]
    ZeroGroupSize(usize),
    #[error("phi = {phi} is outside [1, {p}]")]
    PhiOutOfRange { phi: f64, p: usize },
    #[error("delta = {0} is outside (0, 1/2]")]
    DeltaOutOfRange(f64),
    #[error("U[{k}][{group}] = {bound} is below psi * k = {required}")]
    PsiAssumptionViolated {
        k: usize,
        group: usize,
        bound: f64,
        required: f64,
    },
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("LP solver failed: {0}")]
    NumericalFailure(String),
    #[error("brute-force enumeration too large: m = {m}, n = {n}")]
    TooLarge { m: usize, n: usize },
    #[error("matrix is not decomposable: {0}")]
    NotDecomposable(String),
    #[error("merge exceeded its iteration cap of {0}")]
    IterationCapExceeded(usize),
    #[error("greedy ranker is stuck at slot {slot}: no item has headroom")]
    Stuck { slot: usize },
    #[error("noisy group {0} is empty")]
    EmptyNoisyGroup(usize),
    #[error("eta = {0} must lie in [0, 1/2)")]
    EtaTooLarge(f64),
    #[error("no group satisfies U[k][l] <= k/4 at k = {0}")]
    FamilyConditionViolated(usize),
    #[error("ranking has fewer than 5 slots, checkpoint set is empty")]
    EmptyCheckpointSet,
    #[error("invalid experiment config: {0}")]
    ConfigInvalid(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
