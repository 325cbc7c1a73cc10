use std::io;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Variants map one-to-one onto the failure modes named by each module's
/// contract so callers (the CLI in particular) can classify them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("open loop: {0}")]
    OpenLoop(String),
    #[error("malformed token stream: {0}")]
    MalformedToken(String),
    #[error("inconsistent streams: {0}")]
    InconsistentStreams(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("self intersection: {0}")]
    SelfIntersection(String),
    #[error("nesting error: {0}")]
    Nesting(String),
    #[error("tessellation failed: {0}")]
    Tessellation(String),
    #[error("mesh is not closed: {0}")]
    OpenMesh(String),
    #[error("empty solid")]
    EmptySolid,
    #[error("degenerate neighborhood around point {0}")]
    DegenerateNeighborhood(usize),
    #[error("sample size error: {0}")]
    SampleSize(String),
    #[error("zero-length vector")]
    ZeroVector,
    #[error("inconsistent diffusion state: {0}")]
    InconsistentState(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("residual MASK tokens after sampling: {0}")]
    ResidualMask(usize),
    #[error("empty input set")]
    EmptySet,
    #[error("empty mesh")]
    EmptyMesh,
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures of the geometric compiler; these are what the
    /// invalid-rate metric counts.
    pub fn is_compile_failure(&self) -> bool {
        matches!(
            self,
            Error::Geometry(_)
                | Error::OpenLoop(_)
                | Error::SelfIntersection(_)
                | Error::Nesting(_)
                | Error::Tessellation(_)
                | Error::OpenMesh(_)
                | Error::EmptySolid
                | Error::MalformedToken(_)
                | Error::InconsistentStreams(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
