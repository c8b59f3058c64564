use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian (relative deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not unitary (deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("state is not SL-class: block ({0}, {1}) is traceless but nonzero")]
    NotSl(usize, usize),

    #[error("map is not Hermiticity-preserving (residue {residue:.3e})")]
    NotHermitianPreserving { residue: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0} did not converge")]
    NoConvergence(&'static str),
}
