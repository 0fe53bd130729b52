use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("rate function solve did not converge at r = {r} after {iterations} iterations")]
    NonConvergence { r: f64, iterations: usize },

    #[error("degenerate estimate: {0}")]
    DegenerateEstimate(String),

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("censored fraction {fraction:.4} exceeds {limit} at N = {window}")]
    ExcessCensoring {
        window: usize,
        fraction: f64,
        limit: f64,
    },
}
