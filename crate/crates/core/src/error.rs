use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not a rotation: {0}")]
    NotRotation(String),
    #[error("degenerate subspace basis (gram determinant {0:e})")]
    DegenerateBasis(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid too small for difference stencils at node {0}")]
    StencilTooSmall(usize),
    #[error("singular metric at node {0}")]
    SingularMetric(usize),
    #[error("exponent p={p} must exceed dimension m={m}")]
    ExponentTooSmall { p: f64, m: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("rank-deficient neighbourhood at vertex {0}")]
    RankDeficient(usize),
    #[error("graph certification failed at vertex {vertex}: {kind}")]
    Certification { vertex: usize, kind: GraphFailure },
    #[error("vertex {0} lies outside every exhaustion region")]
    NotProper(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least two systems, got {0}")]
    TooFewSystems(usize),
    #[error("transitivity audit failed: {0}")]
    Transitivity(String),
    #[error("normal field bound unattainable: {0}")]
    NormalBound(String),
    #[error("fixed point iteration left the target patch at chart {chart}, node {node}")]
    LeftPatch { chart: usize, node: usize },
    #[error("non-contraction measured: factor {0}")]
    NonContraction(f64),
    #[error("unknown scenario {0}")]
    UnknownScenario(String),
    #[error("config violation: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

/// Reasons a local graph representation can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphFailure {
    Fold,
    Slope,
    Incomplete,
}

impl std::fmt::Display for GraphFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            GraphFailure::Fold => "fold",
            GraphFailure::Slope => "slope",
            GraphFailure::Incomplete => "incomplete",
        };
        f.write_str(s)
    }
}

impl From<std::io::Error> for GeomError {
    fn from(e: std::io::Error) -> Self {
        GeomError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, GeomError>;
