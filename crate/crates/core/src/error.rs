use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid GLL order {0}: at least two points are required")]
    InvalidOrder(usize),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("length mismatch in {context}: expected {expected}, got {actual}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("singular matrix: zero pivot at row {row} ({context})")]
    Singular { context: String, row: usize },

    #[error("assembly failed for subdomain {subdomain}: {reason}")]
    Assembly { subdomain: usize, reason: String },

    #[error("preconditioner block {block} is singular")]
    Preconditioner { block: usize },

    #[error("inverse iteration did not converge after {iterations} steps (residual {residual:e})")]
    InverseIteration { iterations: usize, residual: f64 },

    #[error("coarse space setup failed: {0}")]
    Coarse(String),

    #[error("non-finite value produced by operator at Krylov step {0}")]
    NonFinite(usize),

    #[error("GMRES did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("shift {shift:e} is singular for block {block}")]
    SingularShift { block: usize, shift: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("oracle refused: {0}")]
    OracleGuard(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            context,
            expected,
            actual,
        })
    }
}
