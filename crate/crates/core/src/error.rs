use thiserror::Error;

use crate::geometry::Family;

/// Failures raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("position y = {y} is behind the receiver plane")]
    BehindReceiverPlane { y: f64 },

    #[error("relative motion has zero displacement, heading undefined")]
    DegenerateMotion,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),

    #[error("range circles do not intersect (d11^2 - x^2 = {residual})")]
    NoIntersection { residual: f64 },

    #[error("ranges inconsistent with relative motion (cosine argument {cosine})")]
    InconsistentRanges { cosine: f64 },

    #[error("differential bearing {0} rad puts the target at infinity")]
    CotangentSingularity(f64),

    #[error("ranges must be positive (got {0})")]
    NonPositiveRange(f64),

    #[error("zero noise sigma makes the likelihood degenerate")]
    DegenerateLikelihood,

    #[error("link out of receiver field of view")]
    LinkInfeasible,

    #[error("{family:?} expects {expected} elements, got {got}")]
    DimensionMismatch {
        family: Family,
        expected: usize,
        got: usize,
    },

    #[error("{0:?} needs a second target position")]
    MissingGeometry(Family),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
