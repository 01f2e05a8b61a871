//! Error types shared across the toolkit.

/// Errors produced by the simulation and analysis operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The tap mask did not generate a maximal-length sequence.
    #[error("polynomial {polynomial:#x} is not maximal for order {order} (period {period}, expected {expected})")]
    InvalidPolynomial {
        order: u32,
        polynomial: u32,
        period: usize,
        expected: usize,
    },

    /// The fit window contains no usable structure (constant samples).
    #[error("gaussian fit window is degenerate (constant values)")]
    FitDegenerate,

    #[error("insufficient peaks: found {found}, need at least 2")]
    InsufficientPeaks { found: usize },

    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    /// Drift estimation has no time lever arm to work with.
    #[error("degenerate drift geometry: {0}")]
    DegenerateDrift(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
