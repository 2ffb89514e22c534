use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Operands have incompatible shapes.
    #[error("dimension mismatch in {context}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    /// A factor matrix lost column rank (smallest singular value below tolerance).
    #[error("rank-deficient factor: sigma_min = {sigma_min:e}, tolerance = {tolerance:e}")]
    RankDeficient { sigma_min: f64, tolerance: f64 },

    /// A matrix required to be positive definite is not.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// The matrix logarithm is undefined because an eigenvalue is below the floor.
    #[error("eigenvalue {lambda:e} below log floor {floor:e}")]
    LogUndefined { lambda: f64, floor: f64 },

    /// A configuration or argument is outside its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The sample covariance of a window supports fewer than `r` factor directions.
    #[error("window {window}: sample covariance has {available} positive eigenvalues, rank {requested} requested; use a smaller rank")]
    InsufficientRank {
        window: usize,
        requested: usize,
        available: usize,
    },

    /// The line search could not find an acceptable step.
    ///
    /// `max_decrease` is the largest first-order decrease `|φ′(0)|·α` over the
    /// feasible trial steps, for telling rounding floors from real failures.
    #[error("line search failed at iteration {iteration} after {evals} evaluations: {reason} (largest predicted decrease {max_decrease:e})")]
    LineSearch {
        iteration: usize,
        evals: usize,
        max_decrease: f64,
        reason: String,
    },

    /// The search direction is not a descent direction.
    #[error("not a descent direction: slope = {0:e}")]
    NotDescent(f64),

    /// Label sets that make a metric undefined (e.g. no positives).
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_shape(
    context: &'static str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
