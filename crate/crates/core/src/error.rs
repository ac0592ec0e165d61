use thiserror::Error;

use crate::geometry::FreeHomotopyClass;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("point ({x}, {y}) lies outside the chart domain")]
    OutsideDomain { x: f64, y: f64 },

    #[error("class {0} is not representable on this model")]
    UnrepresentableClass(FreeHomotopyClass),

    #[error("invalid loop: {0}")]
    InvalidLoop(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("flux undefined for class {0}: no primitive of the magnetic form is invariant under the deck group")]
    FluxUndefined(FreeHomotopyClass),

    #[error("no negative seed found at k = {0}")]
    NoNegativeSeed(f64),

    #[error("action not bounded below here: {0}")]
    NotBoundedBelow(String),

    #[error("linear solve failed: {0}")]
    SingularSystem(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("optimizer diverged: {0}")]
    Divergence(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
