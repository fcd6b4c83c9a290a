use thiserror::Error;

/// Everything that can go wrong inside the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state: {invariant} violated ({detail})")]
    InvalidState {
        invariant: &'static str,
        detail: String,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("invalid parameter `{name}`: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("Liouvillian rejected: {check} residual {residual:e}")]
    InvalidLiouvillian { check: &'static str, residual: f64 },

    #[error(
        "steady state is not unique: two smallest |eigenvalues| are {smallest:e} and {second:e}"
    )]
    DegenerateSteadyState { smallest: f64, second: f64 },

    #[error("non-finite propagator entries at t = {time}")]
    NonFinite { time: f64 },

    #[error("numerical invariant violated: {0}")]
    NumericalInvariant(String),

    #[error(
        "finite-difference derivative inconsistent at t = {time}: step h gives {coarse:e}, h/2 gives {fine:e}"
    )]
    RichardsonMismatch { time: f64, coarse: f64, fine: f64 },

    #[error("pure-state family inconsistent: |r . dr| = {0:e} while |r| = 1")]
    InconsistentPureFamily(f64),

    #[error("measurement variance vanishes with nonzero signal slope {slope:e}: Fisher information is unbounded")]
    UnboundedFisherInformation { slope: f64 },

    #[error("closed form unavailable for {0} interaction (derived for XX only; XZ relaxes the probe to I/2)")]
    ClosedFormUnavailable(String),

    #[error("config error at line {line}: `{key}`: {detail}")]
    Config {
        key: String,
        line: usize,
        detail: String,
    },

    #[error("io error: {0}")]
    Io(String),

    #[error("{context}: {source}")]
    Context { context: String, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The underlying error with all context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for numerical
    /// invariant failures, 4 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config { .. }
            | Error::InvalidParameter { .. }
            | Error::InvalidGrid(_)
            | Error::ClosedFormUnavailable(_) => 2,
            Error::InvalidState { .. }
            | Error::InvalidLiouvillian { .. }
            | Error::DegenerateSteadyState { .. }
            | Error::NonFinite { .. }
            | Error::NumericalInvariant(_)
            | Error::RichardsonMismatch { .. }
            | Error::InconsistentPureFamily(_)
            | Error::UnboundedFisherInformation { .. } => 3,
            Error::DimensionMismatch { .. } | Error::Io(_) | Error::Context { .. } => 4,
        }
    }

    pub(crate) fn invalid_state(invariant: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidState {
            invariant,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid_param(name: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            detail: detail.into(),
        }
    }
}
