use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("insufficient observations: need more than {needed}, have {available}")]
    InsufficientRows { needed: usize, available: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is singular or rank deficient: {0}")]
    Singular(String),

    #[error("solver did not converge after {iterations} iterations (kkt residual {kkt_residual:.3e})")]
    NotConverged { iterations: usize, kkt_residual: f64 },

    #[error("NaN encountered in solver iterates at iteration {0}")]
    NanIterate(usize),

    #[error("explosive process: companion spectral radius {0:.6}")]
    Explosive(f64),

    #[error("degenerate series: {0}")]
    Degenerate(String),

    #[error("at grid point (lambda_i = {lambda_i:.4e}, lambda_g = {lambda_g:.4e}): {source}")]
    AtGridPoint {
        lambda_i: f64,
        lambda_g: f64,
        #[source]
        source: Box<SpecsError>,
    },

    #[error("at split {split}: {source}")]
    AtSplit {
        split: usize,
        #[source]
        source: Box<SpecsError>,
    },

    #[error("csv error: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SpecsError {
    /// True for errors that come from numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            SpecsError::NotConverged { .. }
            | SpecsError::NanIterate(_)
            | SpecsError::Singular(_)
            | SpecsError::Explosive(_) => true,
            SpecsError::AtGridPoint { source, .. } | SpecsError::AtSplit { source, .. } => {
                source.is_numerical()
            }
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, SpecsError>;
