use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sequence length must be at least 1")]
    EmptySequence,

    #[error("degenerate sequence")]
    DegenerateSequence,

    #[error("M must be ≥ 2 (got {0})")]
    TooFewSubcarriers(usize),

    #[error("bandwidth/carrier budget infeasible: Tb·B/(M(1+α)) = {budget:.6} < 1")]
    InfeasibleBudget { budget: f64 },

    #[error("β exceeds bandwidth budget: requested {requested}, at most {allowed} fit")]
    SpreadingFactorOverBudget { requested: usize, allowed: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid filter: {0}")]
    InvalidFilter(String),

    #[error("Nyquist violation: sample rate {sample_rate} Hz below required {required} Hz")]
    Nyquist { sample_rate: f64, required: f64 },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed CSV at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line tool: 1 for configuration
    /// problems, 2 for everything that goes wrong while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}
