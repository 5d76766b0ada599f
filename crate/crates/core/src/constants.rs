//! Numerical constants and the default tolerance ledger shared by every module.

pub const TWO_PI: f64 = std::f64::consts::TAU;
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Sampling density per variable for ellipticity checks.
pub const ELLIPTIC_GRID: usize = 64;
/// Smallest admissible singular value of a leading symbol sample.
pub const ELLIPTIC_SMIN: f64 = 1e-8;
/// Pivot tolerance used by all row reductions.
pub const PIVOT_TOL: f64 = 1e-10;
/// Target accuracy for directly summed zeta values.
pub const ZETA_SUM_TOL: f64 = 1e-13;
/// Coefficients below this magnitude are dropped from numerically inverted symbols.
pub const FFT_PRUNE_TOL: f64 = 1e-15;
/// Grid resolution of the discrete argument principle.
pub const WINDING_GRID: usize = 4096;
/// Default base grid for lattice Chern numbers.
pub const CHERN_GRID: usize = 24;

/// Identity checks.
pub const TOL_IDENTITY: f64 = 1e-8;
/// Exact-cancellation checks.
pub const TOL_CANCEL: f64 = 1e-10;
