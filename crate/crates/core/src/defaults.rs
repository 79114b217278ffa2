//! Default tolerances and sampling parameters. Every public operation that
//! uses one of these also accepts an explicit override.

/// Slack allowed when testing a point against a box.
pub const CONTAINMENT_TOL: f64 = 1e-9;

/// Max-norm residual allowed in vector-field intertwining checks.
pub const RESIDUAL_TOL: f64 = 1e-6;

/// Finite-difference step for Jacobians.
pub const JACOBIAN_STEP: f64 = 1e-6;

/// Equispaced points per axis on the standard sample grid.
pub const GRID_PER_AXIS: usize = 17;

/// Tensor grids larger than this are randomly subsampled.
pub const GRID_CAP: usize = 100_000;

/// Seed for grid subsampling when none is given.
pub const GRID_SEED: u64 = 0;

/// Maximum number of target witnesses drawn from a predicate relation per jump.
pub const WITNESS_CAP: usize = 8;

/// Event times are bisected until the bracket is this fraction of the step.
pub const BISECTION_REL: f64 = 1e-10;

/// Substeps of the reference integration used to check that a sampled
/// curve follows a vector field.
pub const FLOW_SUBSTEPS: usize = 4;

/// Floor on the time gap that normalises the flow defect between samples.
pub const FLOW_DT_FLOOR: f64 = 1e-6;
