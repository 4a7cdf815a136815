//! Crate-wide error type.

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by problem construction, compilation, solving and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("spin value at index {index} is {value}, must be +1 or -1")]
    InvalidSpinValue { index: usize, value: i8 },

    #[error("problem has no nonzero coupling or field; scale is undefined")]
    AllZero,

    #[error("problem is not normalized: |J_{i}{j} + J_{j}{i}| = {magnitude} exceeds 2")]
    NotNormalized { i: usize, j: usize, magnitude: f64 },

    #[error("problem carries linear terms; absorb them into an ancilla spin first")]
    LinearTermsPresent,

    #[error("spin budget exceeded: {required} spins required, {available} available")]
    SpinBudget { required: usize, available: usize },

    #[error("enumeration budget exceeded: {n} spins, limit {max}")]
    EnumerationBudget { n: usize, max: usize },

    #[error("search space too large: {size} candidates, limit {max}")]
    SearchSpaceTooLarge { size: u128, max: u128 },

    #[error("base q={q} exceeds c_max+1={limit} for this profile")]
    BaseOutOfRange { q: i64, limit: i64 },

    #[error("penalty weight {weight} is not representable: must be in 1..={c_max}")]
    PenaltyOutOfRange { weight: i64, c_max: i64 },

    #[error("digit value {value} out of range for base {q}")]
    DigitOutOfRange { value: i64, q: i64 },

    #[error("unsupported constellation: {0}")]
    UnsupportedConstellation(String),

    #[error("device program violates its profile:\n{0}")]
    InvalidProgram(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Process exit code the CLI maps this error onto.
    ///
    /// 1 = usage/parse, 2 = validation or budget failure, 3 = internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Io(_) | Error::Json(_) => 1,
            Error::Internal(_) => 3,
            _ => 2,
        }
    }
}
