use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix size mismatch: {0} vs {1}")]
    MatrixSize(usize, usize),
    #[error("torus rank mismatch: {0} vs {1}")]
    Rank(usize, usize),
    #[error("requested {requested} components but input watermarks only support {achievable} (achievable watermark {watermark})")]
    Watermark { requested: usize, achievable: usize, watermark: i32 },
    #[error("leading symbol is not elliptic: smallest singular value {smin:.3e} at {point:?}")]
    NonElliptic { point: Vec<f64>, smin: f64 },
    #[error("mode {0} lies in the untracked gap of the symbol")]
    UntrackedMode(i64),
    #[error("symbol has no exact operator data (zero mode and complete expansion)")]
    NotExact,
    #[error("untracked components of order {0} >= -1: finite part is undetermined")]
    UntrackedPole(i32),
    #[error("component of order {0} is not trace class")]
    NotTraceClass(i32),
    #[error("elements refer to different connections")]
    ThetaMismatch,
    #[error("parity violation: {0}")]
    Parity(String),
    #[error("degree mismatch: {0}")]
    Degree(String),
    #[error("structure constants are not associative (defect {0:.3e})")]
    NonAssociative(f64),
    #[error("subspace is not a two-sided ideal (defect {0:.3e})")]
    NotIdeal(f64),
    #[error("functional is not a trace on the required subspace (defect {0:.3e})")]
    NotTrace(f64),
    #[error("wrong arity: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("unstable value {value:.6} is {distance:.3e} away from the nearest integer")]
    Unstable { value: f64, distance: f64 },
    #[error("rank jump in idempotent family: {0}")]
    GapClosing(String),
    #[error("near-singular function: |f| = {0:.3e}")]
    NearSingular(f64),
    #[error("truncation L = {length} is too short: value moves by {moved:.3e}")]
    Truncation { length: usize, moved: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
