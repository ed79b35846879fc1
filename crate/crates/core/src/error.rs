use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("element order {0} is outside the supported range 1..=16")]
    InvalidOrder(usize),

    #[error("interior element spectrum is not simple: {lower} and {upper} coincide to within {rel_gap:e} (relative)")]
    NonSimpleSpectrum { lower: f64, upper: f64, rel_gap: f64 },

    #[error("spectral parameter {lambda} lies within {distance:e} of the interior eigenvalue {pole}")]
    PoleProximity { lambda: f64, pole: f64, distance: f64 },

    #[error("secular equation solve failed for theta = {theta}: {reason}")]
    SecularSolveFailed { theta: f64, reason: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("transform length {0} is not supported (need K >= 2)")]
    UnsupportedLength(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("matrix with shift {shift} is not positive definite (pivot {pivot} at row {row})")]
    IndefiniteShift { shift: f64, row: usize, pivot: f64 },

    #[error("discrete operator is not positive definite: denominator {denominator} at spectral index {index:?}")]
    IndefiniteOperator { denominator: f64, index: Vec<usize> },

    #[error("spectral cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
