use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An operation was called on inputs that violate its stated precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Conformity closure exceeded the recursion depth bound, which indicates
    /// an incompatible initial mesh.
    #[error("refinement closure exceeded depth bound {bound} (initial mesh not compatible?)")]
    ClosureDepth { bound: usize },

    /// Mesh failed a structural check (conformity, orientation, ...).
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// A tetrahedron is degenerate or otherwise unusable for assembly.
    #[error("invalid element: {0}")]
    InvalidElement(String),

    /// A user-supplied field produced a non-finite value during quadrature.
    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("dimension mismatch: expected {expected}, got {got} for {what}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// Solver setup failed (non-symmetric operator, singular coarse matrix, ...).
    #[error("solver setup: {0}")]
    Setup(String),

    /// The iteration itself went wrong in a way that is not plain
    /// non-convergence (e.g. loss of positive definiteness in PCG).
    #[error("solver breakdown: {0}")]
    Breakdown(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
