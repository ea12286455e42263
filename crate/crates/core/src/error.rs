use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across model construction, Hankel assembly and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// Input parameters violate a stochasticity or sign constraint.
    #[error("validation: {what} (row {row})")]
    Validation { what: String, row: usize },

    /// Same as [`Error::Validation`] for violations not tied to one row.
    #[error("validation: {0}")]
    Invalid(String),

    /// The stationary equations have more than one normalized solution.
    #[error("reducible chain: stationary null space has dimension {nullity}")]
    Reducible { nullity: usize },

    /// A symbol, index or string length outside its admissible range.
    #[error("domain: {0}")]
    Domain(String),

    /// An index space or dense matrix exceeds the configured size limit.
    #[error("size limit: {0}")]
    SizeLimit(String),

    /// Matrix dimensions that do not fit together.
    #[error("shape: {0}")]
    Shape(String),

    /// A distribution or Hankel matrix that is not normalized / nonnegative.
    #[error("input: {0}")]
    Input(String),

    /// The reduced chain `A* = sum_y M*(y)` has no unique stationary vector.
    #[error("reduced model is reducible: stationary null space has dimension {nullity}")]
    ReducibleResult { nullity: usize, partial: Box<crate::pipeline::PartialReduction> },

    /// A state that carries no mass, so its update has a zero denominator.
    #[error("degenerate state {state}: {reason}")]
    DegenerateState { state: usize, reason: String },

    /// A solver invariant broke (monotonicity, constraint drift).
    #[error("internal consistency: {0}")]
    Internal(String),

    #[error("parse: {0}")]
    Parse(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable category, used by the CLI for its exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Validation { .. } | Error::Invalid(_) | Error::Domain(_) | Error::Shape(_) | Error::Input(_) => {
                "validation"
            }
            Error::Reducible { .. } | Error::ReducibleResult { .. } | Error::DegenerateState { .. } | Error::Internal(_) => "numerical",
            Error::SizeLimit(_) => "size-limit",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}
