use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("function lives on a different mesh than the quadrature")]
    MeshMismatch,

    #[error("pair field does not belong to this quadrature")]
    PairFieldMismatch,

    #[error("collar constraint violated at node {node} (value {value})")]
    Constraint { node: usize, value: f64 },

    #[error("pair field is not antisymmetric at entry {entry}")]
    NotAntisymmetric { entry: usize },

    #[error("coefficient value {value} at ({x}, {x_prime}) outside band [{h_min}, {h_max}]")]
    OutOfBand {
        value: f64,
        x: f64,
        x_prime: f64,
        h_min: f64,
        h_max: f64,
    },

    #[error("tabulated coefficient has no value at pair ({x}, {x_prime})")]
    Interpolation { x: f64, x_prime: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("limit problem failed to converge: {0}")]
    LimitSolve(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
