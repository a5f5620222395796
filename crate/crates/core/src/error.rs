use thiserror::Error;

/// Errors raised by the compression, clustering, environment and learning
/// routines. Messages are stable; the CLI maps them to exit code 1.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("no data")]
    NoData,
    #[error("no candidates")]
    NoCandidates,
    #[error("need at least one macro")]
    NeedMacro,
    #[error("uncoverable trajectory at position {0}")]
    Uncoverable(usize),
    #[error("no macros found")]
    NoMacrosFound,
    #[error("codebook capacity below alphabet: 2^{b_limit} < {alphabet}")]
    CapacityBelowAlphabet { b_limit: u32, alphabet: usize },
    #[error("empty signal")]
    EmptySignal,
    #[error("window length mismatch: expected {expected}, got {got}")]
    WindowLengthMismatch { expected: usize, got: usize },
    #[error("heterogeneous sampling: dt {0} vs {1}")]
    HeterogeneousSampling(f64, f64),
    #[error("map parse error at line {line}: {msg}")]
    MapParse { line: usize, msg: String },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("empty action set")]
    EmptyActionSet,
    #[error("policy not converged")]
    PolicyNotConverged,
    #[error("theorem requires m > 1")]
    TheoremRequiresTwoMacros,
    #[error("invalid N/|A| combination")]
    InvalidBoundInputs,
}

pub type Result<T> = std::result::Result<T, Error>;
