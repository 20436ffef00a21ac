use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("a counts vector needs at least one symbol")]
    EmptyDomain,

    #[error("no observations: every count is zero")]
    EmptySample,

    #[error("invalid mixing distribution: {0}")]
    InvalidMixture(&'static str),

    #[error("prior assigns zero mass to observed count {0}")]
    Infeasible(u64),

    #[error("Good-Turing estimate is undefined: every symbol received zero mass")]
    GoodTuringUndefined,

    #[error("count {0} cannot occur under the true distribution")]
    ImpossibleCount(u64),

    #[error("exact permutation-invariant oracle supports at most {max} symbols, got {k}")]
    TooManySymbols { k: usize, max: usize },

    #[error("every permutation has zero likelihood")]
    DegeneratePermutations,

    #[error("estimate is not normalized")]
    NotNormalized,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("cannot parse estimator `{spec}`: {reason}")]
    Spec { spec: String, reason: String },
}
