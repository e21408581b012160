use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point is off the manifold (residual {residual:e})")]
    OffManifold { residual: f64 },

    #[error("tangent step of length {norm} exceeds the injectivity bound {bound}")]
    StepTooLarge { norm: f64, bound: f64 },

    #[error("sample is empty")]
    EmptySample,

    #[error("kernel normalizer {value:e} is numerically zero")]
    DegenerateDenominator { value: f64 },

    #[error("sample carries no responses")]
    MissingResponses,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("limit variance degenerates to zero ({0})")]
    DegenerateVariance(&'static str),

    #[error("quadrature unresolved: {coarse} at base resolution vs {fine} at double")]
    ResolutionTooCoarse { coarse: f64, fine: f64 },

    #[error("rejection sampler stalled after {proposals} proposals")]
    SamplerStalled { proposals: u64 },

    #[error("eigensolver did not converge: {0}")]
    ConvergenceFailure(String),

    #[error("no neighbours within the ball around sample {0}")]
    EmptyBall(usize),

    #[error("operation not supported on this manifold: {0}")]
    UnsupportedManifold(&'static str),

    #[error("unknown kernel moment `{0}`")]
    UnknownMoment(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite, got {value}")))
    }
}
