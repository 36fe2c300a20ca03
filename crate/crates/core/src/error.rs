use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("degenerate deformation at node {node}: jacobian = {jac:e}")]
    DegenerateDeformation { node: usize, jac: f64 },

    #[error("diffeomorphism violated at t = {time}: node {node} has jacobian {jac:e} (reduce time.dt)")]
    DiffeomorphismViolation { time: f64, node: usize, jac: f64 },

    #[error("degenerate deformed triangle {triangle}: signed area = {area:e}")]
    InvertedElement { triangle: usize, area: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("velocity system is not positive definite: {0}")]
    Indefinite(String),

    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}
