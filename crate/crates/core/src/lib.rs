//! Semiclassical analysis of one-dimensional integrable systems.
//!
//! The crate quantizes polynomial Hamiltonians `H(p, q)` on periodic
//! grids, traces their level curves, builds WKB eigen-half-densities with
//! Airy-type turning-point corrections, evaluates the stationary-phase
//! overlap of eigenfunctions of two different integrable systems, and
//! computes exact and asymptotic Wigner 6j recoupling coefficients whose
//! semiclassics follow the same pattern.
//!
//! Modules mirror the pipeline:
//!
//! * [`hamiltonian`] — polynomial symbols, partials, Poisson brackets;
//! * [`levelcurve`] — level-set tracing, branches, actions, Maslov data;
//! * [`quantize`] — Weyl matrices, exact spectra, Bohr-Sommerfeld solves;
//! * [`wkb`] — Airy functions, connection ratios, WKB half-densities;
//! * [`overlap`] — stationary-phase overlaps between two systems;
//! * [`sixj`] — exact Racah sums and Ponzano-Regge asymptotics.

pub mod hamiltonian;
pub mod levelcurve;
pub(crate) mod numerics;
pub mod overlap;
pub mod quantize;
pub mod sixj;
pub mod tolerances;
pub mod wkb;

pub use hamiltonian::{HamiltonianError, PolyHamiltonian, Var};
pub use levelcurve::{
    action_along, cycle_action, loop_maslov_index, maslov_index, period, solve_branches,
    trace_level_curve, Branch, CurvePath, Direction, LevelCurveError, LevelSet, PhasePoint,
    TurningKind, TurningPoint,
};
pub use overlap::{
    action_difference, basis_overlap, eigenbasis, find_intersections, intersect_level_sets,
    overlap_asymptotic, overlap_exact, relative_maslov, trace_auto, verify_hessian_identity,
    verify_hessian_identity_line, EigenBasis, IntersectionPoint, Intersections,
    OverlapAsymptotic, OverlapContribution, OverlapError,
};
pub use quantize::{
    bohr_sommerfeld, bohr_sommerfeld_spectrum, boundary_mass, exact_spectrum, weyl_quantize,
    BsLevel, QuantizeError, QuantumGrid, Spectrum,
};
pub use sixj::{
    convergence_study, ponzano_regge, racah_6j, tetrahedron_from_lengths, tetrahedron_geometry,
    ConvergenceCell, ConvergenceRow, ConvergenceStudy, SixJ, SixJError, SixJInput, Tetrahedron,
};
pub use wkb::{airy, airy_ai, connection_ratio, WkbError, WkbState};
