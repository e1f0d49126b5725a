use thiserror::Error;

/// Failure modes shared by every stage of a verification run.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid convex function: {0}")]
    InvalidSpec(String),
    #[error("invalid operator model: {0}")]
    InvalidModel(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("no closed-form kernel for {model} on {domain}")]
    UnsupportedModelDomain { model: String, domain: String },
    #[error("unsupported model for this estimator: {0}")]
    UnsupportedModel(String),
    #[error("boundary integral does not converge: {0}")]
    DivergentBoundaryIntegral(String),
    #[error("sample appears non-integrable (tail index estimate {tail_index:.3})")]
    NonIntegrableDetected { tail_index: f64 },
    #[error("quadrature reached {subdivisions} subdivisions with error {error:.3e} > tolerance {tolerance:.3e}")]
    MaxSubdivisions {
        subdivisions: usize,
        error: f64,
        tolerance: f64,
    },
    #[error("exterior tail is not integrable: {0}")]
    TailDivergence(String),
    #[error("importance weights degenerate: effective sample fraction {ess:.3} below floor {floor:.3}")]
    DegenerateWeights { ess: f64, floor: f64 },
    #[error("convex function has atoms; use the general-convex verifier")]
    IncompatibleSpec,
    #[error("config error: {0}")]
    Config(String),
    #[error("validation error in entry `{entry}`: {reason}")]
    Validation { entry: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
