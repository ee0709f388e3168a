use thiserror::Error;

/// Errors raised while building, synthesizing or simulating the closed loop.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite input to {0}")]
    NonFinite(&'static str),

    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("infeasible trim at alpha_v = {alpha_v}: {reason}")]
    InfeasibleTrim { alpha_v: f64, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    Dimension {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("fault distribution violates rank(C L) = s (C L must have full column rank): rank {rank} < {s}")]
    RankDeficient { rank: usize, s: usize },

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("weights are not convex: {0}")]
    NonConvexWeights(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
