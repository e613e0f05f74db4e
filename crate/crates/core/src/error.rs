use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("grid extent along axis {axis} is {extent}, must be at least 2")]
    BadExtent { axis: usize, extent: usize },
    #[error("grid spacing along axis {axis} is {spacing}, must be positive and finite")]
    BadSpacing { axis: usize, spacing: f64 },
    #[error("vertex {vertex} out of range for grid with {count} vertices")]
    VertexOutOfRange { vertex: usize, count: usize },
    #[error("field has {got} values, grid has {expected} vertices")]
    FieldSize { expected: usize, got: usize },
    #[error("field value at vertex {0} is not finite")]
    NonFinite(usize),
    #[error("ensemble members do not share the same grid")]
    TopologyMismatch,
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("member {0} does not exist")]
    UnknownMember(usize),
    #[error("brute-force pairing is limited to {limit} vertices, grid has {count}")]
    OracleGuard { limit: usize, count: usize },
    #[error("all persistence pairs have zero persistence (constant ensemble)")]
    ZeroPersistence,
    #[error("persistence diagram of member {0} has not been normalized")]
    NotNormalized(usize),
    #[error("gamma must be positive, got {0}")]
    BadGamma(f64),
    #[error("persistence cull must lie in [0, 1), got {0}")]
    BadCull(f64),
    #[error("at least one of minima/maxima must be selected")]
    NoKinds,
    #[error("need at least {needed} members, got {got}")]
    TooFewMembers { needed: usize, got: usize },
    #[error("nearest-neighbor count {knn} out of range for {n} members")]
    BadKnn { knn: usize, n: usize },
    #[error("graph node {0} has no neighbors")]
    IsolatedNode(usize),
    #[error("Jacobi eigensolver did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("embedding dimension {n_d} out of range for {n} members")]
    BadEmbeddingDim { n_d: usize, n: usize },
    #[error("cluster count {k} out of range for {n} members")]
    BadK { k: usize, n: usize },
    #[error("persistence threshold must lie in (0, 1), got {0}")]
    BadThreshold(f64),
    #[error("operation requires a 2D grid")]
    NotPlanar,
    #[error("invalid synthetic ensemble specification: {0}")]
    BadSynthSpec(String),
    #[error("member set is empty")]
    EmptyMemberSet,
    #[error("matrix is not square or not symmetric")]
    BadMatrix,
    #[error("thread count must be positive, got {0}")]
    BadThreads(usize),

    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("unsupported dtype {0:?}, expected \"f32\" or \"f64\"")]
    BadDtype(String),
    #[error("member {member}: expected {expected} bytes in {path}, found {got}")]
    BlobSize { member: usize, path: PathBuf, expected: u64, got: u64 },
    #[error("member {member}: blob {path} not found")]
    MissingBlob { member: usize, path: PathBuf },
    #[error("member ids must be contiguous from 0; member at position {position} has id {id}")]
    NonContiguousIds { position: usize, id: usize },
    #[error("malformed CSV {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Stable machine-readable identifier, used by the CLI's `ERROR:<code>:` prefix.
    pub fn code(&self) -> &'static str {
        match self {
            Error::BadDimension(_) | Error::BadExtent { .. } | Error::BadSpacing { .. } => "BAD_GRID",
            Error::VertexOutOfRange { .. } => "BAD_VERTEX",
            Error::FieldSize { .. } | Error::NonFinite(_) => "BAD_FIELD",
            Error::TopologyMismatch => "TOPOLOGY_MISMATCH",
            Error::EmptyEnsemble | Error::EmptyMemberSet => "EMPTY",
            Error::UnknownMember(_) => "UNKNOWN_MEMBER",
            Error::OracleGuard { .. } => "ORACLE_GUARD",
            Error::ZeroPersistence => "CONSTANT_ENSEMBLE",
            Error::NotNormalized(_) => "NOT_NORMALIZED",
            Error::BadGamma(_) => "BAD_GAMMA",
            Error::BadCull(_) => "BAD_CULL",
            Error::NoKinds => "BAD_KINDS",
            Error::TooFewMembers { .. } => "TOO_FEW_MEMBERS",
            Error::BadKnn { .. } => "BAD_KNN",
            Error::IsolatedNode(_) => "ISOLATED_NODE",
            Error::NoConvergence(_) => "NO_CONVERGENCE",
            Error::BadEmbeddingDim { .. } => "BAD_NDIM",
            Error::BadK { .. } => "BAD_K",
            Error::BadThreshold(_) => "BAD_THRESHOLD",
            Error::NotPlanar => "NOT_PLANAR",
            Error::BadSynthSpec(_) => "BAD_SYNTH",
            Error::BadMatrix => "BAD_MATRIX",
            Error::BadThreads(_) => "BAD_THREADS",
            Error::Manifest { .. } => "BAD_MANIFEST",
            Error::BadDtype(_) => "BAD_DTYPE",
            Error::BlobSize { .. } => "SIZE_MISMATCH",
            Error::MissingBlob { .. } => "MISSING_BLOB",
            Error::NonContiguousIds { .. } => "NON_CONTIGUOUS_IDS",
            Error::Csv { .. } => "BAD_CSV",
            Error::Io { .. } => "IO",
            Error::Json(_) => "BAD_JSON",
        }
    }

    /// True for failures of the filesystem itself rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::MissingBlob { .. })
    }
}
