use thiserror::Error;

/// Errors shared across the solver stack.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("sample index {index} out of range for {count} samples")]
    SampleOutOfRange { index: usize, count: usize },

    #[error("norm weight matrix is not symmetric positive definite")]
    WeightNotSpd,

    #[error(
        "pivot submatrix is numerically singular (condition estimate {cond:.3e}); \
         reduce the coefficient table rank first"
    )]
    SingularPivotBlock { cond: f64 },

    #[error("interpolation system of size {rank} is singular")]
    SingularInterpolation { rank: usize },

    #[error("operator is not positive definite at sample {sample} (w'Pw = {value:.3e})")]
    SpdViolation { sample: usize, value: f64 },

    #[error("rank-one correction broke down: {reason}")]
    AlsBreakdown { reason: String },

    #[error("residual evaluation overflowed at sample {sample} (exponent {exponent:.3e})")]
    Overflow { sample: usize, exponent: f64 },

    #[error("non-finite residual estimate at iteration {iteration}")]
    NonFiniteEpsilon { iteration: usize },

    #[error("initial residual is zero; nothing to solve")]
    ZeroBaseline,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
