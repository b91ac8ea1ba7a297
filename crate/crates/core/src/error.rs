//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("duplicate subsystem label `{0}`")]
    DuplicateLabel(String),

    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),

    #[error("subsystem `{0}` is not square (present on both sides with equal dimension)")]
    NonSquareSubsystem(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operator is not positive semidefinite (eigenvalue floor {0:.3e})")]
    NotPsd(f64),

    #[error("map is not CPTP: {0}")]
    NotCptp(String),

    #[error("process is not stored in pure (vector) form")]
    NotPure,

    #[error("P-CTC evolution undefined: ||K psi|| = 0 within tolerance")]
    UndefinedEvolution,

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("resource limit exceeded: construction needs {required} amplitudes, budget is {budget}")]
    ResourceLimit { required: u128, budget: u128 },

    #[error("parse error: {0}")]
    Parse(String),
}
