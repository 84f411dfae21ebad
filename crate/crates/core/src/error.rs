use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid physical parameters: {0}")]
    InvalidParams(String),

    #[error("domain too narrow: {mass:.3e} of the probability lies outside the grid (limit {limit:.1e})")]
    DomainTooNarrow { mass: f64, limit: f64 },

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("operation requires a ring domain")]
    NotRing,

    /// Nonzero extra flux on a line domain, or a malformed flux specification.
    #[error("invalid DGSpec: {0}")]
    DgSpec(String),

    #[error("state has a node where a node-free state is required: {0}")]
    NodalState(String),

    #[error("singular linear system (pivot {pivot:.3e} at row {row})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("density scheme failure: cell {cell} went negative ({value:.3e})")]
    NegativeDensity { cell: usize, value: f64 },

    #[error("quadrature diverged: {0}")]
    Divergent(String),

    #[error("invalid beable system: {0}")]
    InvalidSystem(String),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NonHermitian(f64),

    #[error("singular jump rate: state {state} carries current {current:.3e} with probability {probability:.3e}")]
    SingularProbability {
        state: usize,
        probability: f64,
        current: f64,
    },

    #[error("master-equation step too large: dt * max exit rate = {0:.3e} (limit 0.1)")]
    StepSize(f64),

    #[error("master equation produced negative probability {value:.3e} in state {state}")]
    NegativeProbability { state: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
