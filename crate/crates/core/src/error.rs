use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape parameter must be positive and finite, got {0}")]
    InvalidShape(f64),

    #[error("non-finite coordinate in point {index}")]
    NonFiniteCoordinate { index: usize },

    #[error("index pair (n={n}, m={m}) out of range")]
    IndexOutOfRange { n: usize, m: usize },

    #[error("argument {0} outside [-1, 1]")]
    ArgumentOutOfDomain(f64),

    #[error("expansion undefined for equal radii ({0})")]
    EqualRadii(f64),

    #[error("source radius {source_radius} must be smaller than target radius {target_radius}")]
    RadiusOrder {
        source_radius: f64,
        target_radius: f64,
    },

    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),

    #[error("Green's function is singular at coincident points")]
    Singularity,

    #[error("radius ratio {0} outside (0, 1)")]
    RatioOutOfRange(f64),

    #[error("at least one point is required")]
    EmptyInput,

    #[error("number of levels must be at least 1, got {0}")]
    InvalidLevels(usize),

    #[error("block at level {level} is not at the finest level {finest}")]
    NotFinestLevel { level: usize, finest: usize },

    #[error("point {index} lies outside the partitioned square")]
    PointOutsideSquare { index: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("reference vector is identically zero")]
    ZeroReference,

    #[error("dense assembly of {n} points exceeds the cap of {cap}")]
    MatrixTooLarge { n: usize, cap: usize },

    #[error("matrix is numerically singular (pivot ratio {0:e})")]
    SingularMatrix(f64),

    #[error("non-finite value encountered at iteration {iteration}")]
    NonFiniteIteration { iteration: usize },

    #[error("invalid solver setting: {0}")]
    InvalidSolverSetting(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
