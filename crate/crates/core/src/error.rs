use std::fmt;
use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// What made a mesh fail validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    IndexOutOfRange,
    RepeatedVertex,
    DegenerateTriangle,
    NonManifoldEdge,
    InconsistentOrientation,
    UnreferencedVertex,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TopologyKind::IndexOutOfRange => "vertex index out of range",
            TopologyKind::RepeatedVertex => "triangle repeats a vertex",
            TopologyKind::DegenerateTriangle => "degenerate triangle",
            TopologyKind::NonManifoldEdge => "edge shared by more than two triangles",
            TopologyKind::InconsistentOrientation => "inconsistent orientation",
            TopologyKind::UnreferencedVertex => "vertex not used by any triangle",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{kind} at {element} {index}")]
    Topology {
        kind: TopologyKind,
        /// "triangle" or "vertex".
        element: &'static str,
        index: usize,
    },

    #[error("triangle {triangle} is degenerate (area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("singular saddle-point system (pivot block {pivot})")]
    SingularSystem { pivot: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("objective increased at iteration {iteration}: {previous} -> {current}")]
    NonMonotoneObjective {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("invalid fold count {folds} for {rows} rows")]
    InvalidFoldCount { folds: usize, rows: usize },

    #[error("smoother is degenerate for every lambda in the grid")]
    DegenerateSmoother,

    #[error("mesh is not a unit sphere: vertex {vertex} has radius {radius}")]
    NotASphere { vertex: usize, radius: f64 },

    #[error("matrix is rank deficient ({context})")]
    RankDeficient { context: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}, column {column}: {message}")]
    Data {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },
}

impl Error {
    /// True for errors caused by bad input (files, shapes, arguments) as
    /// opposed to numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Topology { .. }
                | Error::DegenerateTriangle { .. }
                | Error::DimensionMismatch { .. }
                | Error::InvalidFoldCount { .. }
                | Error::NotASphere { .. }
                | Error::InvalidArgument(_)
                | Error::Io { .. }
                | Error::Data { .. }
                | Error::ResourceLimit(_)
        )
    }
}
