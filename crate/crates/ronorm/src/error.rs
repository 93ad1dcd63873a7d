//! Error kinds shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("mesh parse error at line {line}: {msg}")]
    MeshParse { line: usize, msg: String },

    #[error("triangle {tri} references vertex {vertex}, mesh has {n_vertices} vertices")]
    VertexIndexOutOfRange {
        tri: usize,
        vertex: usize,
        n_vertices: usize,
    },

    #[error("triangle {tri} is degenerate (area {area:.3e})")]
    DegenerateTriangle { tri: usize, area: f64 },

    #[error("mesh is disconnected ({components} components)")]
    MeshDisconnected { components: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigensolver did not converge within {max_iter} iterations")]
    EigenNonConvergence { max_iter: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("container format error: {0}")]
    Container(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data/format, 4 numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::Json(_) => 2,
            Error::Io(_)
            | Error::Container(_)
            | Error::MeshParse { .. }
            | Error::VertexIndexOutOfRange { .. }
            | Error::DegenerateTriangle { .. }
            | Error::MeshDisconnected { .. }
            | Error::DimensionMismatch(_) => 3,
            Error::EigenNonConvergence { .. } | Error::Numerical(_) => 4,
        }
    }
}
