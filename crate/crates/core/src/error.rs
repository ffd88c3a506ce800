use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field does not conform to the domain it is used with")]
    DomainMismatch,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("spectrum needs {nodes} nodes, above the cap of {cap}")]
    SpectrumCap { nodes: usize, cap: usize },

    #[error("field is not on the unit sphere (norm = {norm})")]
    NotOnSphere { norm: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("p = {p} is too large for the monotonicity constant (2^(2p-3) overflows)")]
    Overflow { p: f64 },

    #[error("norm collapsed to {norm:e}; step too large or solution blew up")]
    NormCollapse { norm: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("discrete Poincaré constant mismatch: stencil formula {analytic}, inverse iteration {iterated}")]
    PoincareMismatch { analytic: f64, iterated: f64 },
}
