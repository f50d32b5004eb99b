use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid surface spec: {0}")]
    InvalidSpec(String),

    #[error("degenerate surface: {0}")]
    DegenerateSurface(String),

    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid load: {0}")]
    InvalidLoad(String),

    #[error("contact solver stalled after {sweeps} sweeps (complementarity residual {residual:e})")]
    SolverStall { sweeps: usize, residual: f64 },

    #[error("sampling plan: {0}")]
    Plan(String),

    #[error("cannot normalize sample {sample_id}: feature row has zero norm")]
    ZeroNormRow { sample_id: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("kernel system is rank deficient")]
    RankDeficient,

    #[error("kernel matrix could not be factorized (largest jitter tried {jitter:e})")]
    IllConditioned { jitter: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("config: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than by a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::InvalidInput(_)
                | Error::InvalidLoad(_)
                | Error::Plan(_)
                | Error::DimensionMismatch { .. }
                | Error::Config(_)
                | Error::Parse { .. }
        )
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}
