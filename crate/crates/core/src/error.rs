use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid ell model: {0}")]
    InvalidModel(String),

    #[error("doubling ratio unavailable: custom models must supply an explicit ratio")]
    RatioUnavailable,

    #[error("psi2 is not invertible for this model: {0}")]
    NotInvertible(String),

    #[error("value {value} is outside the image of psi2 (sup = {sup})")]
    OutOfImage { value: f64, sup: f64 },

    #[error("quadrature did not converge (best estimate {estimate})")]
    QuadratureNotConverged { estimate: f64 },

    #[error("cannot decide whether q_max is finite; supply the answer with CustomEll::with_finite_q_max")]
    QMaxInconclusive,

    #[error("t = {t} is beyond q_max = {q_max}")]
    BeyondQMax { t: f64, q_max: f64 },

    #[error("root bracket could not be established: {0}")]
    NoBracket(String),

    #[error("unknown problem '{0}'")]
    UnknownProblem(String),

    #[error("point is outside the problem domain")]
    OutsideDomain,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no ell model available: the problem has no certificate and none was supplied")]
    MissingCertificate,

    #[error("infinite doubling ratio: SGD step is undefined for this model")]
    InfiniteRatio,

    #[error("missing constant for rate formula: {0}")]
    MissingConstant(String),

    #[error("rate formula not applicable: {0}")]
    NotApplicable(String),

    #[error("trace/rule mismatch: {0}")]
    TraceMismatch(String),

    #[error("zero gradient at the given point")]
    ZeroGradient,

    #[error("trace format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
