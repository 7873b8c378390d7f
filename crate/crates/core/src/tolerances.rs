//! Numerical tolerances shared across the crate.
//!
//! Every threshold that decides whether a computed quantity is accepted
//! lives here, so the accuracy contract of the library can be audited in
//! one place. Tolerances are absolute unless the name says otherwise.

/// A point is accepted as lying on the level curve `H = b` when
/// `|H(x) - b|` is below this bound. Internal Newton projections converge
/// well past it (see [`PROJECTION_TOL`]) so downstream second differences
/// of actions keep double-precision headroom.
pub const TOL_CURVE: f64 = 1e-10;

/// Convergence target for Newton projections onto a level curve. Tighter
/// than [`TOL_CURVE`] on purpose: action integrals inherit this accuracy
/// and Hessian checks divide second differences by `1e-8`.
pub const PROJECTION_TOL: f64 = 1e-13;

/// Two fiber roots closer than this are treated as a near-tangency
/// (the caller sits at or next to a turning point).
pub const TOL_TURN: f64 = 1e-8;

/// A turning point is simple when both `dH/dq` and `d2H/dp2` exceed this.
pub const TOL_SIMPLE: f64 = 1e-8;

/// Absolute convergence target for action integrals along curve arcs.
pub const TOL_ACTION: f64 = 1e-10;

/// Tighter refinement stop for the action differences entering overlap
/// phases, whose moduli must reproduce structural identities to `1e-10`.
pub const TOL_ACTION_PHASE: f64 = 1e-12;

/// Smallest admissible arc step of the predictor-corrector tracer;
/// reaching it raises `StepCollapse`.
pub const EPS_STEP: f64 = 1e-9;

/// WKB evaluation refuses points within `DELTA_TP_FACTOR * (h^2/|alpha|)^(1/3)`
/// of a turning point, where the uniform (Airy) regime takes over.
pub const DELTA_TP_FACTOR: f64 = 5.0;

/// Relative step for `d p(q,b) / d b` differencing: `1e-5 * max(|b|, 1)`.
pub const DELTA_B_REL: f64 = 1e-5;

/// Relative step of the four-point Hessian stencil: `1e-4 * max(|b|, 1)`.
pub const DELTA_HESSIAN_REL: f64 = 1e-4;

/// Two intersection candidates within this radius are the same point.
pub const DEDUP_RADIUS: f64 = 1e-7;

/// Transversality floor: `|{H1,H2}|` at an intersection must exceed
/// `TOL_TRANS_REL` times the bracket scale of the configuration.
pub const TOL_TRANS_REL: f64 = 1e-6;

/// Loop-closure residual above which a level is rejected as not
/// Bohr-Sommerfeld quantized.
pub const TOL_BS_CLOSURE: f64 = 1e-6;

/// Hermiticity slack accepted by the exact-spectrum oracle, relative to
/// the largest matrix entry.
pub const TOL_HERMITIAN: f64 = 1e-12;

/// Margin fraction of the grid box that must carry no eigenfunction mass.
pub const GRID_MARGIN_FRACTION: f64 = 0.1;

/// Eigenfunction mass allowed in the outer margin of the box.
pub const TOL_MARGIN_MASS: f64 = 1e-12;
