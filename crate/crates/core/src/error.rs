use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("Hurst parameter {name} = {value} is outside the open interval (1/2, 1)")]
    HurstOutOfRange { name: String, value: f64 },

    #[error("admissibility violated: 2*H0 + sum(H_i) - d - 1 = {rho} is not > 0")]
    AdmissibilityViolated { rho: f64 },

    #[error("Hölder exponent unavailable: min(H_i) = {min_h} is not > 5/6")]
    HolderUnavailable { min_h: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("extension mesh over the domain is empty")]
    EmptyDomainMesh,

    #[error("coefficient evaluation failed at t = {t}: {reason}")]
    CoefficientEvaluationFailure { t: f64, reason: String },

    #[error("start point is not in the interior of the domain")]
    StartOutsideDomain,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate time grid: {0}")]
    DegenerateGrid(String),

    #[error("paths do not share a compatible time grid: {0}")]
    GridMismatch(String),

    #[error("covariance factorization failed after jitter: {0}")]
    FactorizationFailure(String),

    #[error("point ({t}, {x:?}) is outside the sheet coverage")]
    OutOfCoverage { t: f64, x: Vec<f64> },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("estimate is not positive: {0}")]
    NonPositiveEstimate(f64),

    #[error("eigen iteration diverged: {0}")]
    IterationDivergence(String),

    #[error("eigen iteration did not reach residual {tol:e} (last {residual:e})")]
    NonConvergedResidual { residual: f64, tol: f64 },

    #[error("ball of radius {radius} around the point is not inside the domain")]
    BallNotInsideDomain { radius: f64 },

    #[error("finite-difference mesh violates stability: {0}")]
    StabilityViolation(String),

    #[error("finite differences need a hyperrectangle domain")]
    NonRectangularDomain,

    #[error("singular linear system at row {0}")]
    SingularMatrix(usize),

    #[error("configuration parse error: {0}")]
    ConfigParse(String),
}
