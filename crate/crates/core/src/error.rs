use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    /// A scalar argument fell outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two fields were combined that do not live on the same grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A field or intermediate value was NaN or infinite.
    #[error("non-finite value {value} at {location}")]
    NonFinite { value: f64, location: String },

    /// An admissibility constraint on envelope parameters was violated.
    #[error("constraint violated: {0}")]
    Constraint(String),

    /// Bracketing root finder was handed an interval without a sign change.
    #[error("no sign change on [{a}, {b}]: f(a) = {fa}, f(b) = {fb}")]
    NoSignChange { a: f64, b: f64, fa: f64, fb: f64 },

    /// Adaptive quadrature could not reach its tolerance.
    #[error("quadrature did not converge: estimated error {estimate:e} > {tol:e}")]
    Quadrature { estimate: f64, tol: f64 },

    /// Zero pivot in the tridiagonal elimination.
    #[error("tridiagonal solve failed at row {row}")]
    Tridiagonal { row: usize },

    /// Time integration produced a negative density below round-off.
    #[error("negative density {value:e} at x = {x} (step {step})")]
    Negative { value: f64, x: f64, step: usize },

    /// The frozen flow increased between checkpoints.
    #[error("monotonicity violated by {excess:e} at x = {x}, t = {t}")]
    Monotonicity { excess: f64, x: f64, t: f64 },

    /// A field left the set bounded by the sub- and super-solution envelopes.
    #[error("envelope violated by {violation:e} at x = {x}")]
    Envelope { violation: f64, x: f64 },

    /// A fit or diagnostic had too little data.
    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable code for JSON summaries.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::Constraint(_) => "constraint",
            Error::NoSignChange { .. } => "no_sign_change",
            Error::Quadrature { .. } => "quadrature",
            Error::Tridiagonal { .. } => "tridiagonal",
            Error::Negative { .. } => "negative_density",
            Error::Monotonicity { .. } => "monotonicity",
            Error::Envelope { .. } => "envelope",
            Error::Insufficient(_) => "insufficient_data",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Whether the failure is numerical (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::Quadrature { .. }
                | Error::Tridiagonal { .. }
                | Error::Negative { .. }
                | Error::Monotonicity { .. }
                | Error::Envelope { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
