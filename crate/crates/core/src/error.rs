use thiserror::Error;

use crate::lasso::{LassoFit, ScaledLassoFit};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("coordinate descent hit {} sweeps without converging (kkt violation {:e})", .0.iterations, .0.max_kkt_violation)]
    MaxIterations(Box<LassoFit>),

    #[error("scaled lasso did not converge within {} alternations", .0.iterations)]
    ScaledLassoMaxIterations(Box<ScaledLassoFit>),

    #[error("objective became non-finite")]
    NonFinite,

    #[error("residual is exactly zero; noise level is undefined")]
    DegenerateResidual(Box<ScaledLassoFit>),

    #[error("nodewise regression for column {column} gave tau^2 = {tau_sq:e}")]
    DegenerateTau { column: usize, tau_sq: f64 },

    #[error("variance proxy for coordinate {index} is {value:e}")]
    ZeroVariance { index: usize, value: f64 },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("k = {k} outside 1..={len}")]
    BadK { k: usize, len: usize },

    #[error("instance too large for exact enumeration: {0}")]
    TooLarge(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
