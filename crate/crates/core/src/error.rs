use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Jacobi parameters alpha={alpha}, beta={beta}: both must exceed -1")]
    InvalidJacobiParams { alpha: f64, beta: f64 },

    #[error("argument {value} outside of [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("polynomial degree must be at least {min}, got {got}")]
    InvalidDegree { min: usize, got: usize },

    #[error("point ({0}, {1}) lies outside the reference triangle")]
    PointOutsideTriangle(f64, f64),

    #[error("basis transformation residual {0:e} exceeds tolerance")]
    TransformResidual(f64),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("refinement closure did not terminate after {0} passes")]
    ClosureDiverged(usize),

    #[error("vertex {0} is not a manifold vertex")]
    NonManifoldVertex(usize),

    #[error("non-finite matrix entry for panel pair ({0}, {1})")]
    NonFiniteEntry(usize, usize),

    #[error("stabilization alpha must be nonnegative, got {0}")]
    InvalidAlpha(f64),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("subspace decomposition does not cover dofs {0:?}")]
    CoverageFailure(Vec<usize>),

    #[error("hierarchy is inconsistent: {0}")]
    Hierarchy(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigenvalue computation failed: {0}")]
    Spectral(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
