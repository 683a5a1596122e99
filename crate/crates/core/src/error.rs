use std::path::PathBuf;

use crate::state::Party;

/// Errors produced across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix trace is {trace} instead of 1")]
    NotUnitTrace { trace: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("non-physical Θ: reconstructed matrix has min eigenvalue {min_eigenvalue:.3e}")]
    NonPhysicalTheta { min_eigenvalue: f64 },

    #[error("Θ00 must equal 1, got {0}")]
    ThetaNormalization(f64),

    #[error("{party:?} marginal is singular (min eigenvalue {min_eigenvalue:.3e}); transform undefined")]
    SingularMarginal { party: Party, min_eigenvalue: f64 },

    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("invalid assemblage: {0}")]
    InvalidAssemblage(String),

    #[error("strategy table with {outcomes}^{settings} entries exceeds the 2^20 guard")]
    StrategyTableTooLarge { settings: usize, outcomes: usize },

    #[error("degenerate measurement: outcome probability {probability:.3e}")]
    DegenerateMeasurement { probability: f64 },

    #[error("invalid measurement vector: {0}")]
    InvalidMeasurement(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("feature scheme mismatch: model expects {expected}, input is {found}")]
    SchemeMismatch { expected: String, found: String },

    #[error("unknown feature scheme `{0}` (valid: General15, Slocc12, EllA9, EllB9, LutA6)")]
    UnknownScheme(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("dataset is degenerate: {0}")]
    DegenerateDataset(String),

    #[error("MAD undefined: no column has both borders present")]
    UndefinedMad,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported file version: {0}")]
    Version(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
