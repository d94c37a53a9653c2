use thiserror::Error;

/// Errors raised while evaluating the hybrid dynamics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("knee angle undefined: leg length {length} exceeds segment length sum {l0}")]
    KneeDomain { length: f64, l0: f64 },
    #[error("torsional leg force singular: sin(beta) = {sin_beta:e}")]
    Singular { sin_beta: f64 },
    #[error("integrator step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("initial state is not a flight apex: {0}")]
    NotAnApex(String),
}

/// Crate-level error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("apex state is degenerate: zero height and zero forward velocity")]
    DegenerateApex,
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("artifact checksum missing (file truncated?)")]
    ChecksumMissing,
    #[error("artifact checksum mismatch: header says {expected}, content hashes to {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("artifact format version {found} is newer than supported version {supported}")]
    Version { found: u32, supported: u32 },
    #[error("malformed artifact: {0}")]
    Format(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
