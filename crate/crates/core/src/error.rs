use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh has no vertices or no faces")]
    EmptyMesh,
    #[error("face {face} references vertex {index} but the mesh has {vertex_count} vertices")]
    FaceIndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("face {face} repeats a vertex index")]
    RepeatedFaceIndex { face: usize },
    #[error("edge ({a}, {b}) is shared by more than two faces")]
    NonManifoldEdge { a: usize, b: usize },
    #[error("edge ({a}, {b}) has zero rest length")]
    ZeroLengthEdge { a: usize, b: usize },
    #[error("face {face} is degenerate (zero area)")]
    DegenerateFace { face: usize },
    #[error("vertex index {index} out of range for {vertex_count} vertices")]
    VertexOutOfRange { index: usize, vertex_count: usize },
    #[error("geodesic query needs at least one source vertex")]
    EmptySources,
    #[error("requested {requested} control nodes but only {available} are available")]
    NodeCount { requested: usize, available: usize },
    #[error("control node list contains vertex {vertex} more than once")]
    DuplicateNode { vertex: usize },
    #[error("{n_neighbor} neighbors need at least {} control nodes, got {nodes}", n_neighbor + 1)]
    TooFewNodes { n_neighbor: usize, nodes: usize },
    #[error("vertex {vertex} reaches only {reachable} control nodes, {required} required")]
    UnreachableNodes {
        vertex: usize,
        reachable: usize,
        required: usize,
    },
    #[error("matrix determinant is not positive; polar decomposition needs det > 0")]
    NonPositiveDeterminant,
    #[error("dual quaternion blend is (nearly) zero: antipodal inputs")]
    AntipodalBlend,
    #[error("rotations {a} and {b} are (nearly) antipodal; the log map is ill-defined")]
    AntipodalRotations { a: usize, b: usize },
    #[error("unsupported Gaussian count per face: {0} (expected 1, 3, 4 or 6)")]
    UnsupportedGaussianCount(usize),
    #[error("{what}: expected length {expected}, got {actual}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("connectivity mismatch: {0}")]
    ConnectivityMismatch(String),
    #[error("malformed document: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to malformed input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveDeterminant
                | Error::AntipodalBlend
                | Error::AntipodalRotations { .. }
                | Error::NonFinite(_)
                | Error::DegenerateFace { .. }
        )
    }
}
