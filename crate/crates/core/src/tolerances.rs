//! Numerical defaults shared across the crate.

/// Relative asymmetry accepted when reading a matrix from a full buffer.
pub const SYMMETRY_REL_TOL: f64 = 1e-10;

/// Default stopping tolerance for PD-completion sweeps (max-abs).
pub const COMPLETION_TOL: f64 = 1e-10;

/// Default sweep cap for PD-completion.
pub const COMPLETION_MAX_SWEEPS: usize = 500;

/// Iterations between recomputations of a chain's cached quantities.
pub const AUDIT_INTERVAL: u64 = 10_000;

/// Allowed drift between cached and recomputed chain quantities.
pub const AUDIT_TOL: f64 = 1e-6;

/// Number of batches used for batch-means standard errors.
pub const MCSE_BATCHES: usize = 50;
