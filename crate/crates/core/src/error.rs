use thiserror::Error;

pub type Result<T> = std::result::Result<T, PspfError>;

#[derive(Debug, Error)]
pub enum PspfError {
    /// Cholesky factorization failed even after one diagonal jitter.
    #[error("covariance `{name}` is not positive definite")]
    SingularCovariance { name: &'static str },

    #[error("need at least {required} particles, got {actual}")]
    InsufficientSample { required: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("`{name}` = {value} is outside {allowed}")]
    Domain {
        name: &'static str,
        value: f64,
        allowed: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("filter failed at time step {t}: {source}")]
    StepFailure {
        t: usize,
        #[source]
        source: Box<PspfError>,
    },

    #[error("log-likelihood increment is -inf (all particles have zero likelihood)")]
    ZeroLikelihood,

    #[error("model does not provide {0}")]
    Unsupported(&'static str),

    #[error("non-finite log-likelihood at the starting point")]
    NonFiniteStart,
}

impl PspfError {
    pub(crate) fn at_step(self, t: usize) -> Self {
        match self {
            e @ PspfError::StepFailure { .. } => e,
            e => PspfError::StepFailure {
                t,
                source: Box::new(e),
            },
        }
    }
}
