use thiserror::Error;

use crate::mdp::Violation;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid MDP: {}", join(.0))]
    InvalidMdp(Vec<Violation>),

    #[error("policy does not match MDP: {0}")]
    PolicyMismatch(String),

    #[error("observation model mismatch: {0}")]
    ModelMismatch(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Enumeration stopped at the cap; `total` is `None` when the class size
    /// does not fit in a `u128`.
    #[error("policy enumeration truncated at cap {cap} (class size {})", fmt_total(.total))]
    CapExceeded { cap: usize, total: Option<u128> },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn join(violations: &[Violation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

fn fmt_total(total: &Option<u128>) -> String {
    match total {
        Some(n) => n.to_string(),
        None => "> 2^128".to_string(),
    }
}
