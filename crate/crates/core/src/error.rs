use thiserror::Error;

/// Errors raised by the guesswork library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid probability vector: {0}")]
    InvalidPmf(String),

    #[error("invalid distortion model: {0}")]
    InvalidDistortion(String),

    #[error("distortion ball of source symbol {symbol} is empty")]
    EmptyBall { symbol: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("Rényi order {0} is outside the admissible range")]
    AlphaOutOfRange(f64),

    #[error("moment order must be positive, got {0}")]
    RhoNonpositive(f64),

    #[error("integer moment order {rho} exceeds the supported maximum {max}")]
    RhoTooLarge { rho: u32, max: u32 },

    #[error("ball mass is zero{}: the guessing moment is infinite", .symbol.as_ref().map(|s| format!(" for symbol {s}")).unwrap_or_default())]
    ZeroBallMass { symbol: Option<String> },

    #[error("instance too large for {what}: {size} > cap {cap}")]
    InstanceTooLarge { what: &'static str, size: f64, cap: f64 },

    #[error("no feasible channel: minimal achievable distortion {min_distortion} exceeds {delta}")]
    NoFeasibleChannel { min_distortion: f64, delta: f64 },

    #[error("{what} did not converge (residual {residual:e})")]
    NonConvergence { what: &'static str, residual: f64 },

    #[error("exponent is infinite: source symbol {symbol} is not covered by the strategy support")]
    InfiniteExponent { symbol: usize },

    #[error("bound violated: {0}")]
    BoundViolated(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
