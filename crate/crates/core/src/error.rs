use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// The stability hypothesis `1/alpha < ||xbar_k||` fails on a support block.
    #[error("alpha condition violated on block {block}: ||x_k|| = {norm} <= 1/alpha = {threshold}")]
    AlphaCondition {
        block: usize,
        norm: f64,
        threshold: f64,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
