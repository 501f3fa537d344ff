use thiserror::Error;

/// Errors produced by the three-tank toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("operating point violates h1 > h3 > h2 ordering: {0:?}")]
    Ordering([f64; 3]),

    #[error("state {0:?} has coincident levels or an empty drain tank; the drift is not differentiable there")]
    NonDifferentiable([f64; 3]),

    #[error("pair (A, B) is not controllable (rank {rank} < {n})")]
    Uncontrollable { rank: usize, n: usize },

    #[error("pole placement failed: {0}")]
    PolePlacement(String),

    #[error("relative degree of output {0} is undefined up to the state dimension")]
    UndefinedRelativeDegree(usize),

    #[error("decoupling matrix is singular")]
    SingularDecoupling,

    #[error("innovation covariance is singular")]
    SingularInnovation,

    #[error("residual window is empty")]
    EmptyWindow,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Errors caused by bad user input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::Config(_) | Error::Ordering(_) | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
