//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    Dimension {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("backward cache does not match layer: {0}")]
    Cache(String),

    #[error("non-finite gradient in layer {layer}")]
    Numeric { layer: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid action {action} for agent {agent} (action space {space})")]
    Action {
        agent: usize,
        action: usize,
        space: usize,
    },

    #[error("agent index {agent} out of range for {n} agents")]
    AgentIndex { agent: usize, n: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("timing error: {0}")]
    Timing(String),

    #[error("degenerate measurement: {0}")]
    Degenerate(String),

    #[error("undefined breakdown: filtered total is zero")]
    UndefinedBreakdown,

    #[error("runtime error: {0}")]
    Runtime(String),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: impl Into<String>, right: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            left: left.into(),
            right: right.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
