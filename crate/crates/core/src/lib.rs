//! Dense numerical toolkit for quantum processes with indefinite causal order.
//!
//! Process matrices are simulated as *linear* post-selected closed timelike
//! curves (P-CTCs): the output of a party's operation is teleported back to
//! its input by post-selecting a maximally entangled Bell outcome. On top of
//! a labeled dense tensor core this crate provides
//!
//! - [`channel`]: CPTP maps and instruments (Kraus/Choi conversions, seeded
//!   random sampling, Stinespring purification),
//! - [`pctc`]: post-selected teleportation and CTC contraction,
//! - [`process`]: process matrices, validity certification, induced maps and
//!   outcome statistics,
//! - [`switch`]: the n-party quantum switch as process vector and as a
//!   controlled-SWAP circuit over a unary factoradic control register,
//! - [`det`]: an acausal-yet-cheap process family built from a one-hot
//!   boolean function, with causally ordered simulation circuits,
//! - [`game`]: causal inequality games, including a brute-force bound over
//!   fixed-order classical strategies.
//!
//! All values are immutable after construction and all operations are pure
//! functions; randomized routines take explicit seeds and are deterministic.

pub mod channel;
pub mod circuit;
pub mod det;
pub mod error;
pub mod format;
pub mod game;
pub mod linalg;
pub mod pctc;
pub mod process;
pub mod rng;
pub mod switch;
pub mod tensor;
pub mod tol;

pub use error::Error;
pub use tensor::{LabeledOperator, StateVector, Subsystem};

/// Complex double-precision scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

/// Default budget for state-vector lengths: 2^25 complex amplitudes.
pub const DEFAULT_BUDGET: u128 = 1 << 25;
