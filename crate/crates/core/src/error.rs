use thiserror::Error;

/// Errors raised by the physical-layer and compute-cost formulas.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("{what} out of range: {value} not in [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("no eligible clients")]
    NoEligibleClients,

    #[error("uplink rate is zero; link cannot carry payload")]
    InfeasibleLink,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Errors raised by the optimizer front-end.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("STE undefined: no feasible clients")]
    NoFeasibleClients,

    #[error("length mismatch between clients ({clients}) and {what} ({got})")]
    LengthMismatch {
        what: &'static str,
        clients: usize,
        got: usize,
    },

    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Errors surfaced by the simulation harness and CLI.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("infeasible scenario: {0}")]
    Infeasible(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

impl HarnessError {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Infeasible(_) => 3,
            HarnessError::Io { .. } => 4,
            HarnessError::Model(ModelError::InvalidParam { .. }) => 2,
            HarnessError::Model(_) | HarnessError::Optimize(_) => 3,
        }
    }
}
