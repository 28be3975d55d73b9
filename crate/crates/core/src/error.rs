use thiserror::Error;

/// Errors surfaced by the certification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("layer {layer}: expected input of length {expected}, got {got}")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("logit margin undefined for fewer than 2 logits")]
    SingletonLogits,
    #[error("invalid segment table: {0}")]
    InvalidSegments(String),
    #[error(
        "pre-activation interval [{lo}, {hi}] escapes breakpoint range [{bp_lo}, {bp_hi}]; \
         widen the outermost breakpoints"
    )]
    BreakpointCoverage {
        lo: f64,
        hi: f64,
        bp_lo: f64,
        bp_hi: f64,
    },
    #[error("target class {0} equals the true class")]
    TargetIsTrueClass(usize),
    #[error("activation {0:?} is not supported here: {1}")]
    UnsupportedActivation(crate::net::ActivationKind, String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("QUBO dimension {0} exceeds the exhaustive-search cap of {1} bits")]
    ExhaustiveCap(usize, usize),
    #[error("LP solver failed: {0}")]
    LpNumerical(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error("invalid cut index {cut} for a network with {layers} layers")]
    InvalidCut { cut: usize, layers: usize },
    #[error("no cut index fits the spin budget of {0}")]
    SpinBudgetExceeded(usize),
    #[error("malformed CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
    #[error("training diverged (loss is NaN); try a lower learning rate")]
    TrainingDiverged,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
