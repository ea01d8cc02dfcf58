use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("side condition violated: residual {residual:.3e} exceeds {tol:.3e}")]
    SideConditionViolated { residual: f64, tol: f64 },

    #[error("wrong class: expected {expected}, found {found}")]
    WrongClass { expected: String, found: String },

    #[error("witness failed: {0}")]
    WitnessFailed(String),

    #[error("network output A2*A1*X is identically zero")]
    NotInX,

    #[error("point is not critical: gradient norm {grad_norm:.3e} exceeds {tol:.3e}")]
    NotCritical { grad_norm: f64, tol: f64 },

    #[error("cone violation: worst slack {slack:.3e}")]
    ConeViolation { slack: f64 },

    #[error("search budget exceeded: 2^{m} subsets requested, limit is 2^{limit}")]
    SearchBudgetExceeded { m: usize, limit: usize },

    #[error("point lies on a cone boundary (slack {slack:.3e})")]
    PointOnBoundary { slack: f64 },

    #[error("activation pattern of A1*X is not a rectangle I x J")]
    NonRectangular,

    #[error("closed-form gradient disagrees with finite differences in layer {layer}: {detail}")]
    GradientMismatch { layer: usize, detail: String },

    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
