//! Numerical tolerances, fixed in one place.

/// Default entrywise absolute comparison tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Eigenvalue cutoff below which Kraus operators are dropped when
/// extracting a Kraus decomposition from a Choi operator.
pub const KRAUS_EIG_CUTOFF: f64 = 1e-12;

/// Eigenvalue floor for positive-semidefiniteness checks.
pub const PSD_FLOOR: f64 = -1e-9;

/// A contracted state with norm below this is treated as zero, making the
/// renormalized P-CTC evolution undefined.
pub const ZERO_NORM_TOL: f64 = 1e-12;

/// Tolerance for the orthogonality property of the one-hot function family.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;
