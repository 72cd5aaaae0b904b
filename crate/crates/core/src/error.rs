use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("root bracketing failed: {0}")]
    Bracket(String),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("loop {loop_index} is self-intersecting (edges {first} and {second})")]
    SelfIntersection {
        loop_index: usize,
        first: usize,
        second: usize,
    },

    #[error("components {0} and {1} overlap")]
    Overlap(usize, usize),

    #[error("mesher failed on loop {loop_index}: {reason}")]
    Mesher { loop_index: usize, reason: String },

    #[error("degenerate triangle {0} (area <= 0)")]
    DegenerateTriangle(usize),

    #[error("matrix is not positive definite: {0}")]
    Indefinite(String),

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {worst_residual:e})")]
    NoConvergence {
        iterations: usize,
        worst_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("zero norm: {0}")]
    ZeroNorm(String),

    #[error("non-monotone refinement sequence: {0:?}")]
    NonMonotone(Vec<f64>),

    #[error("frame ({0}) lies inside the diagonal exclusion zone")]
    DiagonalExclusion(String),

    #[error("{what} stalled with residual {residual:e}")]
    Stalled { what: String, residual: f64 },

    #[error("continuation path failed: {0}")]
    PathFailure(String),

    #[error("density error: {0}")]
    Density(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
