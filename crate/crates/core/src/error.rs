use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported polynomial degree {0} (supported: 1, 2, 3)")]
    UnsupportedDegree(usize),

    #[error("no quadrature rule with exactness {requested} (max tabulated {max})")]
    QuadratureNotTabulated { requested: usize, max: usize },

    #[error("degenerate element {element}: area element {area_element:e} at quadrature point {point}")]
    DegenerateElement {
        element: usize,
        point: usize,
        area_element: f64,
    },

    #[error("field does not match mesh: {0}")]
    FieldMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("linear solve failed ({size} unknowns): {reason}")]
    SolverFailure { size: usize, reason: String },

    #[error("sphere solution extinct at t = {t} (extinction time {extinction})")]
    Extinct { t: f64, extinction: f64 },

    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
