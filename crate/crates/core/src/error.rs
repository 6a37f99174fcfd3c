use std::path::PathBuf;

/// Errors produced by the solver pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    MeshFormat {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("element {element} is degenerate (area {area:e})")]
    DegenerateElement { element: usize, area: f64 },

    #[error("no quadrature rule of degree {0} (supported: 0..=30)")]
    UnsupportedDegree(usize),

    #[error("point ({x}, {y}) lies outside the mesh")]
    PointOutsideMesh { x: f64, y: f64 },

    #[error("linear solve failed: {reason} (relative residual {residual:e}, condition estimate {condition:e})")]
    SingularSystem {
        reason: String,
        residual: f64,
        condition: f64,
    },

    #[error("patch of vertex {vertex}: compatibility residual {residual:e} exceeds tolerance")]
    Compatibility { vertex: usize, residual: f64 },

    #[error("patch of vertex {vertex}: saddle-point system is singular")]
    SingularPatch { vertex: usize },

    #[error("star point ({x}, {y}) is not admissible: {reason}")]
    InadmissibleStarPoint { x: f64, y: f64, reason: String },

    #[error("k^2 = {k2} coincides with a Dirichlet eigenvalue {eigenvalue}")]
    Resonance { k2: f64, eigenvalue: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
