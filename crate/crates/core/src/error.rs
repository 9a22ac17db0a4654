use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform; both shapes are reported.
    #[error("shape mismatch in `{op}`: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Requested system is larger than the exact solver supports.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A Fock-space construction lost more weight to truncation than allowed.
    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unsupported format version: expected {expected}, found `{found}`")]
    Version { expected: u32, found: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
