use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("not enough samples: {clients} clients x {per_client} per client needs {needed}, only {available} available")]
    NotEnoughSamples {
        clients: usize,
        per_client: usize,
        needed: usize,
        available: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("client index {index} out of range for {clients} clients")]
    ClientIndex { index: usize, clients: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("stepsize condition violated: {0}")]
    Stepsize(String),

    #[error("compressor certification failed: measured omega {measured:e}, certified {certified:e}")]
    Certification { measured: f64, certified: f64 },

    #[error("local training certificate failed for client {client}: slack {slack:e}")]
    Certificate { client: usize, slack: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
