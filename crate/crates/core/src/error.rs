use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mesh parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("triangle {triangle} has non-positive signed area {area:e}")]
    Orientation { triangle: usize, area: f64 },

    #[error("non-manifold boundary at edge ({a}, {b}): {message}")]
    NonManifold { a: usize, b: usize, message: String },

    #[error("{what}: expected length {expected}, found {found}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("matrix is not positive definite (negative curvature {curvature:e} at iteration {iteration})")]
    Indefinite { iteration: usize, curvature: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("criterion validity window violated: max u = {max_u} but j' > 0 requires u < {limit}")]
    CriterionWindow { max_u: f64, limit: f64 },

    #[error("infeasible boundary mass {v0} (must lie in (0, {total}))")]
    Infeasible { v0: f64, total: f64 },

    #[error("support of {support} edges is too small; at least {required} are required")]
    SupportTooSmall { support: usize, required: usize },

    #[error("degenerate construction: {0}")]
    Degenerate(String),

    #[error("logistic iteration collapsed onto the trivial branch y = 0")]
    TrivialBranch,
}
