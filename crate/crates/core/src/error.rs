use thiserror::Error;

/// Errors produced by the model, planners, schedulers and simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("service targets are not reachable with one-slot service: {0}")]
    TargetUnreachable(String),

    #[error("invariant violated at slot {slot}: {detail}")]
    Invariant { slot: u64, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
