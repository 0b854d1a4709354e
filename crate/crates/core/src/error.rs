use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dipole count must be odd and at least 3, got {0}")]
    InvalidDipoleCount(usize),

    #[error("parameter `{name}` must be {requirement}, got {value}")]
    InvalidParameter { name: &'static str, requirement: &'static str, value: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("site {site} is outside the ruler (half width {half_width})")]
    SiteOutOfRange { site: i64, half_width: i64 },

    #[error("site {site} is within {margin} sites of a ruler edge (half width {half_width})")]
    EdgeProximity { site: i64, half_width: i64, margin: i64 },

    #[error("sites must be distinct, got {0} twice")]
    CoincidentSites(i64),

    #[error("site {0} is the eliminated left-edge coordinate and cannot be kept")]
    EliminatedSite(i64),

    #[error("dipole separation l = {l} must be smaller than the ion distance w = {w}")]
    DipoleTooLarge { l: f64, w: f64 },

    #[error("regime violation: {0}")]
    RegimeViolation(String),

    #[error("physical ion constants are not available for a dimensionless model")]
    NoPhysicalConstants,

    #[error(
        "quadrature did not converge after {evaluations} evaluations (estimated error {error:e}, target {target:e})"
    )]
    QuadratureNonConvergence { evaluations: usize, error: f64, target: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("underflow: denominator has log value {log_denominator}, ratio log value {log_ratio}")]
    Underflow { log_denominator: f64, log_ratio: f64 },

    #[error("internal consistency check `{what}` failed (relative residual {residual:e})")]
    Inconsistent { what: &'static str, residual: f64 },

    #[error("grid of {points} points exceeds the limit of {limit}")]
    GridTooLarge { points: f64, limit: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
