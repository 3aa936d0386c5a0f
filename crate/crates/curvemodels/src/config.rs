//! Global numerical policy. One place for every tolerance so tests and the CLI
//! agree on what "passes".

/// Least-squares / refit residual that counts as an exact representation.
pub const FIT_TOL: f64 = 1e-10;

/// Relative rank tolerance (against the largest singular value) wherever a
/// range or closure is truncated.
pub const RANK_TOL: f64 = 1e-8;

/// Hard failure threshold for truncation loss: operations error out instead of
/// silently degrading past this.
pub const TRUNC_FAIL: f64 = 1e-6;

/// Residual threshold for projection/idempotency/axiom checks.
pub const AXIOM_TOL: f64 = 1e-8;

/// Maximum Laurent truncation order accepted from the outside.
pub const MAX_ORDER: usize = 128;

/// Maximum quadrature grid size accepted from the outside.
pub const MAX_GRID: usize = 8192;
