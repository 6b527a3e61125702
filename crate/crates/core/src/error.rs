use thiserror::Error;

use crate::lp::LpError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quote surface fails validation ({} violations): {}", .0.len(), .0.join("; "))]
    Validation(Vec<String>),
    #[error("marginals {first} and {second} are not in convex order")]
    ConvexOrder { first: usize, second: usize },
    #[error("no martingale coupling exists for the given marginals")]
    Infeasible,
    #[error("{0} is outside the strategy's domain")]
    Domain(f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
