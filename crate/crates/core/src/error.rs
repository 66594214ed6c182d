use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid job spec: {0}")]
    InvalidSpec(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("invalid placement: {}", join(.0))]
    InvalidPlacement(Vec<Violation>),

    /// The requested layout needs `N` to be a multiple of something it is not.
    #[error("N = {n} is incompatible with the scheme ({reason}); smallest compatible N is {suggested_n}")]
    Divisibility {
        n: usize,
        reason: String,
        suggested_n: usize,
    },

    #[error("scheme needs at least {required} servers, got K = {k}")]
    TooFewServers { k: usize, required: usize },

    #[error("invalid shuffle plan: {0}")]
    InvalidPlan(String),

    #[error("server {server} cannot decode: {reason}")]
    Undecodable { server: usize, reason: String },

    #[error("unsupported placement: {0}")]
    Unsupported(String),

    #[error("search budget exceeded: {needed} candidate placements > cap {cap}")]
    BudgetExceeded { needed: u128, cap: u128 },

    #[error("scalar type cannot represent this value exactly: {0}")]
    Inexact(String),
}

impl Error {
    /// Requests that are well-formed but cannot be satisfied as asked.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::Divisibility { .. } | Error::TooFewServers { .. } | Error::BudgetExceeded { .. }
        )
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
