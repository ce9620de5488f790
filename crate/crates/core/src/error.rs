use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operator is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("state is not normalized (trace {0})")]
    NotNormalized(f64),
    #[error("operator is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("reference state is not pure (purity {0})")]
    NotPure(f64),
    #[error("negative rate {0}")]
    NegativeRate(f64),
    #[error("negative propagation time {0}")]
    NegativeTime(f64),
    #[error("Liouvillian kernel has dimension {0}, expected 1")]
    DegenerateKernel(usize),
    #[error("jump probability {0} exceeds 1; reduce dt")]
    JumpProbability(f64),
    #[error("invalid ostensible jump rate {rate} for dt = {dt}")]
    InvalidOstensibleRate { rate: f64, dt: f64 },
    #[error("increment {increment} does not match detector kind {kind}")]
    IncrementMismatch { kind: String, increment: String },
    #[error("zero-probability outcome at step {step}")]
    ZeroProbability { step: usize },
    #[error("ensemble collapsed at t = {t}: no candidate has finite weight")]
    EnsembleCollapse { t: f64 },
    #[error("incompatible records: {0}")]
    RecordMismatch(String),
    #[error("invalid delay: {0}")]
    InvalidDelay(String),
    #[error("insufficient ensemble: {0}")]
    InsufficientEnsemble(String),
    #[error("empty averaging interval [{0}, {1}]")]
    EmptyInterval(f64, f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed record file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
