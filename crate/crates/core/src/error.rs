use crate::transitions::Direction;

/// Unified error type for the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Model parameters violate a constructor precondition.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A run-length draw exceeded the configured cap and the policy was to
    /// abort rather than clamp.
    #[error("run length exceeds cap {cap} while sampling a {direction:?} run")]
    SampleCapExceeded { cap: u64, direction: Direction },

    /// An exact computation was asked for a horizon beyond its hard limit.
    #[error("horizon {requested} exceeds the supported maximum {max}")]
    HorizonTooLarge { requested: u64, max: u64 },

    /// A computation ran out of its term or wall-clock budget before any
    /// defensible verdict was reached.
    #[error("budget exhausted: {0}")]
    BudgetExceeded(String),

    /// A perturbed switch probability left [0, 1] within the probe horizon.
    #[error("perturbed probability out of range at n = {n} ({direction:?}): {value}")]
    RangeViolation { n: u64, direction: Direction, value: f64 },

    /// A grafted tree needs more history than the declared window provides.
    #[error("graft context cannot be resolved: {0}")]
    ContextUnresolvable(String),

    /// Bad CLI or experiment configuration.
    #[error("bad configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
