//! Stationary-phase overlaps between eigenstates of two integrable systems.
//!
//! The semiclassical overlap of two eigen-half-densities concentrates on the
//! intersection points of the corresponding level curves. Each transversal
//! intersection `c` contributes
//!
//! ```text
//!   (2πh)^{-1/2} |{H1,H2}(c)|^{-1/2} exp(i ΔS(c,c0)/h + i π μ(c,c0)/2)
//! ```
//!
//! relative to a reference intersection `c0` (the one with largest `q`).
//! `ΔS` is the symplectic area enclosed by the γ1 arc from `c0` to `c` and
//! the γ2 arc back, and `μ` counts the tangencies of γ1 to the H2-foliation
//! crossed along the way, signed by the traversal direction. The amplitude
//! uses the Hessian identity `|∂²S/∂b1∂b2| = 1/|{H1,H2}(c)|`, which
//! [`verify_hessian_identity`] checks by finite differences.
//!
//! Conventions assume the standard kinetic orientation: the positively
//! oriented loop (`∮p dq > 0`) coincides with the Hamiltonian flow, which
//! holds for every `p²/2 + V(q)`-type model in this crate.

use crate::hamiltonian::{PolyHamiltonian, Var};
use crate::levelcurve::{
    action_along_tol, period, solve_branches, trace_level_curve, CurvePath, Direction,
    LevelCurveError, LevelSet, PhasePoint,
};
use crate::quantize::{exact_spectrum, weyl_quantize, QuantizeError, QuantumGrid};
use crate::tolerances::{
    DEDUP_RADIUS, DELTA_HESSIAN_REL, TOL_ACTION_PHASE, TOL_BS_CLOSURE, TOL_TRANS_REL,
};
use crate::wkb::{WkbError, WkbState};
use nalgebra::DVector;
use num_complex::Complex64 as C64;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OverlapError {
    #[error(transparent)]
    Curve(#[from] LevelCurveError),
    #[error(transparent)]
    Wkb(#[from] WkbError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(
        "tangential intersection at (p={p:.6}, q={q:.6}): |{{H1,H2}}| = {bracket:.3e} \
         is below the transversality cutoff {tol:.3e}"
    )]
    TangentialIntersection { p: f64, q: f64, bracket: f64, tol: f64 },
    #[error("Poisson bracket vanishes at an arc endpoint; relative Maslov index undefined")]
    TangencyAtEndpoint,
    #[error("state {which} is not on a Bohr-Sommerfeld level: closure defect {defect:.3e}")]
    NotBohrSommerfeld { which: u8, defect: f64 },
    #[error("the level curves do not intersect")]
    NoIntersections,
    #[error("no seed point found on the level set H = {b}")]
    SeedNotFound { b: f64 },
    #[error("eigenbases live on different grids")]
    GridMismatch,
    #[error("state index {n} not below basis size {len}")]
    StateIndex { n: usize, len: usize },
}

/// A point where the two level curves meet. `action_diff` and `rel_maslov`
/// are relative to the reference intersection and are filled in by
/// [`overlap_asymptotic`]; the geometric finders leave them zero.
#[derive(Clone, Copy, Debug)]
pub struct IntersectionPoint {
    pub point: PhasePoint,
    /// `{H1,H2}` at the point.
    pub bracket: f64,
    /// `ΔS(c, c0)`: symplectic area of the disc bounded by the two arcs.
    pub action_diff: f64,
    /// `μ(c, c0)`: traversal-signed count of bracket zeros along the γ1 arc.
    pub rel_maslov: i32,
}

/// Outcome of the intersection search, split by transversality.
#[derive(Clone, Debug)]
pub struct Intersections {
    /// Transversal points (`|bracket| > tol`), sorted by descending `(q, p)`.
    pub points: Vec<IntersectionPoint>,
    /// Points at which the curves touch without crossing transversally.
    pub tangential: Vec<IntersectionPoint>,
    /// Scale of `{H1,H2}` along curve 1; the cutoff is `TOL_TRANS_REL` of it.
    pub bracket_scale: f64,
}

/// One term of the stationary-phase sum, prefactor included.
#[derive(Clone, Copy, Debug)]
pub struct OverlapContribution {
    pub point: IntersectionPoint,
    /// `(2πh)^{-1/2} |bracket|^{-1/2} exp(i action_diff/h + i π rel_maslov/2)`.
    pub term: C64,
}

/// The composed asymptotic overlap.
#[derive(Clone, Debug)]
pub struct OverlapAsymptotic {
    pub b1: f64,
    pub b2: f64,
    pub hbar: f64,
    /// Reference intersection `c0` (largest `q`, ties broken by `p`).
    pub reference: PhasePoint,
    pub contributions: Vec<OverlapContribution>,
    /// Sum of the contributions; phases are relative to `c0`.
    pub total: C64,
    /// WKB phase of the `c0` term composed from the two states' own phase
    /// conventions; `None` when `c0` sits on a turning fiber of either
    /// curve (the position-representation phase degenerates there).
    pub base_phase: Option<f64>,
    /// Period of the first orbit, `T = ∮ ds/|∇H1|`.
    pub period1: f64,
    /// Period of the second orbit; `None` for a non-compact (line) fiber.
    pub period2: Option<f64>,
}

impl OverlapAsymptotic {
    pub fn modulus(&self) -> f64 {
        self.total.norm()
    }

    /// Total with the reference term's own WKB phase restored, so that
    /// ratios at adjacent quantum numbers carry physical phase increments.
    pub fn physical_total(&self) -> Option<C64> {
        self.base_phase.map(|t| self.total * C64::from_polar(1.0, t))
    }

    /// `|⟨ψ2|ψ1⟩|` for unit-normalized bound states: the raw half-density
    /// pairing divided by `√(T1 T2) / (2πh)`.
    pub fn normalized_modulus(&self) -> Option<f64> {
        self.period2
            .map(|t2| 2.0 * PI * self.hbar * self.total.norm() / (self.period1 * t2).sqrt())
    }
}

/// The geometry of the second system's fiber.
enum SecondCurve<'a> {
    Closed(&'a LevelSet),
    Line { p_line: f64 },
}

/// Detects `H = c10 p + c00` (constant coefficients) and returns the fiber
/// line momentum `p = (b - c00)/c10`.
fn affine_in_p(h: &PolyHamiltonian, b: f64) -> Option<f64> {
    let rows = h.coeffs();
    if rows.len() != 2 || rows.iter().any(|r| r.len() > 1) {
        return None;
    }
    let c00 = rows[0].first().copied().unwrap_or(0.0);
    let c10 = rows[1].first().copied().unwrap_or(0.0);
    if c10 == 0.0 {
        return None;
    }
    Some((b - c00) / c10)
}

/// Traces the level component found by scanning fibers outward from
/// `q = 0`, without requiring the caller to supply a seed point.
pub fn trace_auto(h: &PolyHamiltonian, b: f64) -> Result<LevelSet, OverlapError> {
    let r0 = 10.0 * (1.0 + b.abs());
    let mut qs = vec![0.0];
    for k in 1..=100 {
        let q = r0 * k as f64 / 100.0;
        qs.push(q);
        qs.push(-q);
    }
    for q in qs {
        if let Ok(roots) = solve_branches(h, b, q) {
            if let Some(&p) = roots.first() {
                return trace_level_curve(h, b, PhasePoint::new(p, q)).map_err(Into::into);
            }
        }
    }
    Err(OverlapError::SeedNotFound { b })
}

/// Damped 2D Newton iteration on `(H1 - b1, H2 - b2)`.
fn newton_intersection(
    h1: &PolyHamiltonian,
    b1: f64,
    h2: &PolyHamiltonian,
    b2: f64,
    start: PhasePoint,
) -> Option<PhasePoint> {
    let h1p = h1.partial(Var::P);
    let h1q = h1.partial(Var::Q);
    let h2p = h2.partial(Var::P);
    let h2q = h2.partial(Var::Q);
    let s1 = b1.abs().max(1.0);
    let s2 = b2.abs().max(1.0);
    let res = |x: &PhasePoint| {
        let f1 = h1.eval(x.p, x.q) - b1;
        let f2 = h2.eval(x.p, x.q) - b2;
        (f1, f2, (f1 / s1).abs().max((f2 / s2).abs()))
    };
    let mut x = start;
    let (_, _, mut err) = res(&x);
    for _ in 0..200 {
        if err <= 1e-13 {
            return Some(x);
        }
        let (f1, f2, _) = res(&x);
        let a11 = h1p.eval(x.p, x.q);
        let a12 = h1q.eval(x.p, x.q);
        let a21 = h2p.eval(x.p, x.q);
        let a22 = h2q.eval(x.p, x.q);
        let det = a11 * a22 - a12 * a21;
        if det.abs() < 1e-300 {
            return None;
        }
        let dp = (f1 * a22 - f2 * a12) / det;
        let dq = (f2 * a11 - f1 * a21) / det;
        // Damp: halve the step until the residual does not grow.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = PhasePoint::new(x.p - lambda * dp, x.q - lambda * dq);
            let (_, _, e) = res(&trial);
            if e < err {
                x = trial;
                err = e;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if err <= 1e-12 {
        Some(x)
    } else {
        None
    }
}

/// Geometric intersection search: Newton solves seeded from pairs of
/// nearby loop samples of the two fibers, deduplicated, then split into
/// transversal and tangential points. Never errors on tangency.
fn find_intersections_on(
    ls1: &LevelSet,
    h2: &PolyHamiltonian,
    b2: f64,
    second: &SecondCurve<'_>,
) -> Result<Intersections, OverlapError> {
    let h1 = ls1.hamiltonian();
    let b1 = ls1.b();
    let samples1 = ls1.samples();
    let bracket = h1.poisson_bracket(h2);
    let bracket_scale = samples1
        .iter()
        .map(|s| bracket.eval(s.p, s.q).abs())
        .fold(0.0f64, f64::max);

    // Mean sample spacings set the pairing radius.
    let spacing = |pts: &[PhasePoint]| {
        let mut acc = 0.0;
        for i in 0..pts.len() {
            acc += pts[i].dist(&pts[(i + 1) % pts.len()]);
        }
        acc / pts.len() as f64
    };
    let ds1 = spacing(samples1);
    let (partner, ds2): (Vec<PhasePoint>, f64) = match second {
        SecondCurve::Closed(ls2) => (ls2.samples().to_vec(), spacing(ls2.samples())),
        SecondCurve::Line { p_line } => {
            (samples1.iter().map(|s| PhasePoint::new(*p_line, s.q)).collect(), ds1)
        }
    };
    let radius = 3.0 * (ds1 + ds2);

    let mut found: Vec<PhasePoint> = Vec::new();
    for s1 in samples1 {
        for s2 in &partner {
            if s1.dist(s2) > radius {
                continue;
            }
            let seed = PhasePoint::new(0.5 * (s1.p + s2.p), 0.5 * (s1.q + s2.q));
            let Some(c) = newton_intersection(h1, b1, h2, b2, seed) else {
                continue;
            };
            if found.iter().all(|f| f.dist(&c) > DEDUP_RADIUS) {
                found.push(c);
            }
        }
    }

    let tol = TOL_TRANS_REL * bracket_scale;
    let mut ranked: Vec<(PhasePoint, f64)> =
        found.into_iter().map(|c| (c, bracket.eval(c.p, c.q))).collect();
    ranked.sort_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap());
    let mut points: Vec<IntersectionPoint> = Vec::new();
    let mut tangential: Vec<IntersectionPoint> = Vec::new();
    for (c, k) in ranked {
        // At a tangential contact the solver lands on a small cluster of
        // near-solutions; absorb satellites into the recorded touch point.
        if tangential.iter().any(|t| t.point.dist(&c) <= 100.0 * DEDUP_RADIUS) {
            continue;
        }
        let ip = IntersectionPoint { point: c, bracket: k, action_diff: 0.0, rel_maslov: 0 };
        if k.abs() <= tol {
            tangential.push(ip);
        } else {
            points.push(ip);
        }
    }
    let desc = |a: &IntersectionPoint, b: &IntersectionPoint| {
        (b.point.q, b.point.p).partial_cmp(&(a.point.q, a.point.p)).unwrap()
    };
    points.sort_by(desc);
    tangential.sort_by(desc);
    Ok(Intersections { points, tangential, bracket_scale })
}

/// Lenient intersection search on freshly traced fibers: returns both the
/// transversal and the tangential meeting points.
pub fn find_intersections(
    h1: &PolyHamiltonian,
    b1: f64,
    h2: &PolyHamiltonian,
    b2: f64,
) -> Result<Intersections, OverlapError> {
    let ls1 = trace_auto(h1, b1)?;
    let second_set;
    let second = match affine_in_p(h2, b2) {
        Some(p_line) => SecondCurve::Line { p_line },
        None => {
            second_set = trace_auto(h2, b2)?;
            SecondCurve::Closed(&second_set)
        }
    };
    find_intersections_on(&ls1, h2, b2, &second)
}

/// All transversal intersection points of the two fibers, sorted by
/// descending `(q, p)`. Errors with [`OverlapError::TangentialIntersection`]
/// if any meeting point fails the transversality cutoff.
pub fn intersect_level_sets(
    h1: &PolyHamiltonian,
    b1: f64,
    h2: &PolyHamiltonian,
    b2: f64,
) -> Result<Vec<IntersectionPoint>, OverlapError> {
    let found = find_intersections(h1, b1, h2, b2)?;
    reject_tangential(&found)?;
    Ok(found.points)
}

fn reject_tangential(found: &Intersections) -> Result<(), OverlapError> {
    if let Some(t) = found.tangential.first() {
        return Err(OverlapError::TangentialIntersection {
            p: t.point.p,
            q: t.point.q,
            bracket: t.bracket.abs(),
            tol: TOL_TRANS_REL * found.bracket_scale,
        });
    }
    Ok(())
}

/// The canonical arc from `from` to `to`: the shorter way around the loop,
/// preferring the positive orientation on ties. Endpoint-symmetric, so the
/// arc for `(to, from)` is the same arc reversed.
fn canonical_arc<'a>(
    ls: &'a LevelSet,
    from: PhasePoint,
    to: PhasePoint,
) -> Result<(CurvePath<'a>, Direction), OverlapError> {
    let n = ls.samples().len() as f64;
    let (i_f, t_f) = ls.locate(from);
    let (i_t, t_t) = ls.locate(to);
    let fwd = ((i_t as f64 + t_t) - (i_f as f64 + t_f)).rem_euclid(n);
    let dir = if fwd <= n - fwd { Direction::Forward } else { Direction::Backward };
    Ok((ls.path_between(from, to, dir)?, dir))
}

/// `ΔS(c, c0)`: `∮ p dq` over the closed contour made of the γ1 arc from
/// `c0` to `c` and the γ2 arc from `c` back to `c0` — the symplectic area
/// of the enclosed disc. Swapping the arguments reverses both arcs and
/// negates the value.
pub fn action_difference(
    l1: &LevelSet,
    l2: &LevelSet,
    c: PhasePoint,
    c0: PhasePoint,
) -> Result<f64, OverlapError> {
    action_difference_geom(l1, &SecondCurve::Closed(l2), c, c0)
}

fn action_difference_geom(
    l1: &LevelSet,
    second: &SecondCurve<'_>,
    c: PhasePoint,
    c0: PhasePoint,
) -> Result<f64, OverlapError> {
    if c.dist(&c0) <= DEDUP_RADIUS {
        return Ok(0.0);
    }
    let (path1, _) = canonical_arc(l1, c0, c)?;
    let s1 = action_along_tol(&path1, TOL_ACTION_PHASE);
    let s2 = match second {
        SecondCurve::Closed(l2) => {
            let (path2, _) = canonical_arc(l2, c, c0)?;
            action_along_tol(&path2, TOL_ACTION_PHASE)
        }
        SecondCurve::Line { p_line } => p_line * (c0.q - c.q),
    };
    Ok(s1 + s2)
}

/// Relative Maslov index: the number of points on the γ1 arc from `c0` to
/// `c` where γ1 is tangent to the H2-foliation (sign changes of `{H1,H2}`),
/// counted `-1` each when the arc runs along the positive orientation and
/// `+1` each against it. This is the unique signing that both negates under
/// endpoint exchange and compensates the loop action under rerouting.
pub fn relative_maslov(
    l1: &LevelSet,
    h2: &PolyHamiltonian,
    c: PhasePoint,
    c0: PhasePoint,
) -> Result<i32, OverlapError> {
    let bracket = l1.hamiltonian().poisson_bracket(h2);
    let scale = l1
        .samples()
        .iter()
        .map(|s| bracket.eval(s.p, s.q).abs())
        .fold(0.0f64, f64::max);
    if scale == 0.0 {
        return Err(OverlapError::TangencyAtEndpoint);
    }
    let (path, dir) = canonical_arc(l1, c0, c)?;
    let vals: Vec<f64> = path.samples().iter().map(|x| bracket.eval(x.p, x.q)).collect();
    if vals[0].abs() <= 1e-9 * scale || vals[vals.len() - 1].abs() <= 1e-9 * scale {
        return Err(OverlapError::TangencyAtEndpoint);
    }
    let mut count = 0i32;
    let mut last = vals[0];
    for &v in &vals[1..] {
        if v == 0.0 {
            continue;
        }
        if v.signum() != last.signum() {
            count += 1;
        }
        last = v;
    }
    Ok(match dir {
        Direction::Forward => -count,
        Direction::Backward => count,
    })
}

/// The full asymptotic overlap of the two states at levels `(b1, b2)`.
pub fn overlap_asymptotic(
    h1: &PolyHamiltonian,
    b1: f64,
    h2: &PolyHamiltonian,
    b2: f64,
    hbar: f64,
) -> Result<OverlapAsymptotic, OverlapError> {
    if !(hbar > 0.0) {
        return Err(WkbError::BadHbar(hbar).into());
    }
    let ls1 = trace_auto(h1, b1)?;
    let st1 = WkbState::new(ls1, hbar)?;
    let defect1 = st1.closure_defect();
    if defect1 > TOL_BS_CLOSURE {
        return Err(OverlapError::NotBohrSommerfeld { which: 1, defect: defect1 });
    }

    let line = affine_in_p(h2, b2);
    let st2 = match line {
        Some(_) => None,
        None => {
            let ls2 = trace_auto(h2, b2)?;
            let st = WkbState::new(ls2, hbar)?;
            let defect2 = st.closure_defect();
            if defect2 > TOL_BS_CLOSURE {
                return Err(OverlapError::NotBohrSommerfeld { which: 2, defect: defect2 });
            }
            Some(st)
        }
    };
    let second = match (&st2, line) {
        (Some(st), _) => SecondCurve::Closed(st.level_set()),
        (None, Some(p_line)) => SecondCurve::Line { p_line },
        (None, None) => unreachable!(),
    };

    let found = find_intersections_on(st1.level_set(), h2, b2, &second)?;
    reject_tangential(&found)?;
    if found.points.is_empty() {
        return Err(OverlapError::NoIntersections);
    }
    let c0 = found.points[0];

    let prefactor = 1.0 / (2.0 * PI * hbar).sqrt();
    let mut contributions = Vec::with_capacity(found.points.len());
    let mut total = C64::new(0.0, 0.0);
    for raw in &found.points {
        let (ds, mu) = if raw.point.dist(&c0.point) <= DEDUP_RADIUS {
            (0.0, 0)
        } else {
            (
                action_difference_geom(st1.level_set(), &second, raw.point, c0.point)?,
                relative_maslov(st1.level_set(), h2, raw.point, c0.point)?,
            )
        };
        let point = IntersectionPoint { action_diff: ds, rel_maslov: mu, ..*raw };
        let amp = prefactor / raw.bracket.abs().sqrt();
        let term = C64::from_polar(amp, ds / hbar + FRAC_PI_2 * mu as f64);
        total += term;
        contributions.push(OverlapContribution { point, term });
    }

    let base_phase = reference_phase(&st1, st2.as_ref(), line, h1, h2, hbar, c0.point);
    let period1 = period(st1.level_set());
    let period2 = st2.as_ref().map(|st| period(st.level_set()));

    Ok(OverlapAsymptotic {
        b1,
        b2,
        hbar,
        reference: c0.point,
        contributions,
        total,
        base_phase,
        period1,
        period2,
    })
}

/// WKB phase of the reference term: the difference of the two states'
/// phases at `c0` plus the stationary-phase signature `(π/4)·signΦ''`,
/// with `Φ'' ∝ p1'(q) − p2'(q)`.
fn reference_phase(
    st1: &WkbState,
    st2: Option<&WkbState>,
    line: Option<f64>,
    h1: &PolyHamiltonian,
    h2: &PolyHamiltonian,
    hbar: f64,
    c0: PhasePoint,
) -> Option<f64> {
    let (s1, mu1) = st1.phase_at(c0).ok()?;
    let (s2, mu2) = match (st2, line) {
        (Some(st), _) => st.phase_at(c0).ok()?,
        (None, Some(p_line)) => (p_line * c0.q, 0),
        (None, None) => return None,
    };
    let slope = |h: &PolyHamiltonian| -> Option<f64> {
        let hp = h.partial(Var::P).eval(c0.p, c0.q);
        let hq = h.partial(Var::Q).eval(c0.p, c0.q);
        let scale = hp.abs().max(hq.abs()).max(1e-12);
        if hp.abs() <= 1e-9 * scale {
            None
        } else {
            Some(-hq / hp)
        }
    };
    let ds = slope(h1)? - slope(h2)?;
    if ds == 0.0 {
        return None;
    }
    let theta1 = s1 / hbar - FRAC_PI_2 * mu1 as f64;
    let theta2 = s2 / hbar - FRAC_PI_2 * mu2 as f64;
    Some(theta1 - theta2 + FRAC_PI_4 * ds.signum())
}

/// Trapezoid `∫ p dq` over `m` segments of equal polyline arc length between
/// `from` and `to`, each node projected onto the curve. Arc-length placement
/// keeps node positions essentially invariant when the curve is re-traced at
/// a slightly shifted level (re-tracing can change the sample count, which
/// would redistribute index-based nodes); the Hessian stencil relies on the
/// quadrature error varying smoothly across its four corners.
fn resampled_arc_action(ls: &LevelSet, from: PhasePoint, to: PhasePoint, m: usize) -> f64 {
    let samples = ls.samples();
    let n = samples.len();
    let nf = n as f64;
    let (i_f, t_f) = ls.locate(from);
    let (i_t, t_t) = ls.locate(to);
    let pos_f = i_f as f64 + t_f;
    let mut delta = ((i_t as f64 + t_t) - pos_f).rem_euclid(nf);
    if delta == 0.0 {
        delta = nf;
    }

    // Breakpoints: `from`, every sample corner crossed by the arc, `to`,
    // with cumulative chord length at each.
    let mut pts: Vec<PhasePoint> = Vec::with_capacity(delta.ceil() as usize + 2);
    pts.push(from);
    let mut off = 1.0 - t_f;
    let mut k = (i_f + 1) % n;
    while off < delta {
        pts.push(samples[k]);
        k = (k + 1) % n;
        off += 1.0;
    }
    pts.push(to);
    let mut cum = vec![0.0; pts.len()];
    for i in 1..pts.len() {
        cum[i] = cum[i - 1] + (pts[i].p - pts[i - 1].p).hypot(pts[i].q - pts[i - 1].q);
    }
    let total = cum[pts.len() - 1];

    let mut seg = 0usize;
    let mut prev = from;
    let mut acc = 0.0;
    for j in 1..=m {
        let x = if j == m {
            to
        } else {
            let target = total * j as f64 / m as f64;
            while seg + 2 < cum.len() && cum[seg + 1] < target {
                seg += 1;
            }
            let len = (cum[seg + 1] - cum[seg]).max(f64::MIN_POSITIVE);
            let t = ((target - cum[seg]) / len).clamp(0.0, 1.0);
            let a = pts[seg];
            let b = pts[seg + 1];
            let lin = PhasePoint::new(a.p + t * (b.p - a.p), a.q + t * (b.q - a.q));
            ls.project(lin).unwrap_or(lin)
        };
        acc += 0.5 * (prev.p + x.p) * (x.q - prev.q);
        prev = x;
    }
    acc
}

/// Arc action via nested trapezoids at `m`, `2m`, `4m` segments and two
/// Romberg extrapolation steps.
fn smooth_arc_action(ls: &LevelSet, from: PhasePoint, to: PhasePoint, m: usize) -> f64 {
    let t1 = resampled_arc_action(ls, from, to, m);
    let t2 = resampled_arc_action(ls, from, to, 2 * m);
    let t3 = resampled_arc_action(ls, from, to, 4 * m);
    let r12 = (4.0 * t2 - t1) / 3.0;
    let r23 = (4.0 * t3 - t2) / 3.0;
    (16.0 * r23 - r12) / 15.0
}

/// Checks `∂²S/∂b1∂b2 = 1/{H1,H2}(c)` by a centered four-point stencil
/// `(b1±δ1, b2±δ2)` of anchored arc actions, tracking the intersection
/// point across the stencil. Returns `|FD·{H1,H2}(c) − 1|`.
pub fn verify_hessian_identity(
    l1: &LevelSet,
    l2: &LevelSet,
    c: &IntersectionPoint,
) -> Result<f64, OverlapError> {
    hessian_residual(l1, Some(l2), l2.hamiltonian(), l2.b(), c)
}

/// Line-fiber variant of [`verify_hessian_identity`] for `H2` affine in `p`.
pub fn verify_hessian_identity_line(
    l1: &LevelSet,
    h2: &PolyHamiltonian,
    b2: f64,
    c: &IntersectionPoint,
) -> Result<f64, OverlapError> {
    hessian_residual(l1, None, h2, b2, c)
}

fn hessian_residual(
    l1: &LevelSet,
    l2: Option<&LevelSet>,
    h2: &PolyHamiltonian,
    b2: f64,
    c: &IntersectionPoint,
) -> Result<f64, OverlapError> {
    let h1 = l1.hamiltonian();
    let b1 = l1.b();
    let k_at_c = h1.poisson_bracket(h2).eval(c.point.p, c.point.q);
    if k_at_c == 0.0 {
        return Err(OverlapError::TangentialIntersection {
            p: c.point.p,
            q: c.point.q,
            bracket: 0.0,
            tol: 0.0,
        });
    }
    let delta1 = DELTA_HESSIAN_REL * b1.abs().max(1.0);
    let delta2 = DELTA_HESSIAN_REL * b2.abs().max(1.0);

    // Fixed anchor points a quarter loop behind the intersection; their
    // projections onto the shifted curves start each arc.
    let quarter_behind = |ls: &LevelSet| {
        let n = ls.samples().len();
        let (i, _) = ls.locate(c.point);
        ls.samples()[(i + n - n / 4) % n]
    };
    let anchor1 = quarter_behind(l1);
    let anchor2 = l2.map(quarter_behind);
    let line = match l2 {
        Some(_) => None,
        None => {
            // Affine fiber: p(b) must be available to move the line.
            let p_line = affine_in_p(h2, b2);
            if p_line.is_none() {
                return Err(LevelCurveError::NotClosed.into());
            }
            p_line
        }
    };
    let _ = line;

    let m = 400;
    let corner = |s1: f64, s2: f64| -> Result<f64, OverlapError> {
        let bb1 = b1 + s1 * delta1;
        let bb2 = b2 + s2 * delta2;
        let cp = newton_intersection(h1, bb1, h2, bb2, c.point).ok_or(
            OverlapError::TangentialIntersection {
                p: c.point.p,
                q: c.point.q,
                bracket: k_at_c.abs(),
                tol: 0.0,
            },
        )?;
        let ls1p = trace_level_curve(h1, bb1, c.point)?;
        let a1 = ls1p.project(anchor1).ok_or(LevelCurveError::SeedProjectionFailed)?;
        let f1 = smooth_arc_action(&ls1p, a1, cp, m);
        let f2 = match l2 {
            Some(ls2) => {
                let ls2p = trace_level_curve(ls2.hamiltonian(), bb2, c.point)?;
                let a2 = ls2p
                    .project(anchor2.unwrap())
                    .ok_or(LevelCurveError::SeedProjectionFailed)?;
                smooth_arc_action(&ls2p, a2, cp, m)
            }
            None => {
                let p_line = affine_in_p(h2, bb2).unwrap();
                p_line * cp.q
            }
        };
        Ok(f1 - f2)
    };

    let fpp = corner(1.0, 1.0)?;
    let fpm = corner(1.0, -1.0)?;
    let fmp = corner(-1.0, 1.0)?;
    let fmm = corner(-1.0, -1.0)?;
    let fd = (fpp - fpm - fmp + fmm) / (4.0 * delta1 * delta2);
    Ok((fd * k_at_c - 1.0).abs())
}

/// Eigenpairs of a Weyl-quantized Hamiltonian on a shared grid, cached for
/// repeated overlap evaluations.
pub struct EigenBasis {
    pub grid: QuantumGrid,
    pub values: Vec<f64>,
    pub states: Vec<DVector<C64>>,
}

pub fn eigenbasis(
    h: &PolyHamiltonian,
    grid: &QuantumGrid,
    count: usize,
) -> Result<EigenBasis, OverlapError> {
    let m = weyl_quantize(h, grid)?;
    let spec = exact_spectrum(&m, count, grid.dq())?;
    Ok(EigenBasis { grid: *grid, values: spec.values, states: spec.states })
}

impl EigenBasis {
    pub fn state(&self, n: usize) -> Result<&DVector<C64>, OverlapError> {
        self.states.get(n).ok_or(OverlapError::StateIndex { n, len: self.states.len() })
    }
}

/// `⟨ψ2|ψ1⟩ = Σ conj(ψ2)·ψ1·Δq` between states of two bases on one grid.
pub fn basis_overlap(
    basis1: &EigenBasis,
    n1: usize,
    basis2: &EigenBasis,
    n2: usize,
) -> Result<C64, OverlapError> {
    let g1 = &basis1.grid;
    let g2 = &basis2.grid;
    if g1.n != g2.n || g1.hbar != g2.hbar || g1.q_min != g2.q_min || g1.q_max != g2.q_max {
        return Err(OverlapError::GridMismatch);
    }
    let s1 = basis1.state(n1)?;
    let s2 = basis2.state(n2)?;
    let acc: C64 = s2.iter().zip(s1.iter()).map(|(a, b)| a.conj() * b).sum();
    Ok(acc * g1.dq())
}

/// Exact grid oracle: the overlap of the `n1`-th and `n2`-th eigenvectors
/// of the two Weyl-quantized operators on the same grid.
pub fn overlap_exact(
    h1: &PolyHamiltonian,
    n1: usize,
    h2: &PolyHamiltonian,
    n2: usize,
    grid: &QuantumGrid,
) -> Result<C64, OverlapError> {
    let basis1 = eigenbasis(h1, grid, n1 + 1)?;
    let basis2 = eigenbasis(h2, grid, n2 + 1)?;
    basis_overlap(&basis1, n1, &basis2, n2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{momentum, quartic_well, shifted_oscillator};
    use crate::levelcurve::action_along;

    fn oscillator_set(b: f64) -> LevelSet {
        trace_auto(&shifted_oscillator(0.0), b).unwrap()
    }

    /// Closed-form lens area of two radius-r circles at center distance d.
    fn lens_area(r: f64, d: f64) -> f64 {
        2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt()
    }

    #[test]
    fn two_circle_intersections_match_closed_form() {
        let h1 = shifted_oscillator(0.0);
        let h2 = shifted_oscillator(1.0);
        let pts = intersect_level_sets(&h1, 1.0, &h2, 1.0).unwrap();
        assert_eq!(pts.len(), 2);
        let p_star = (7.0f64 / 4.0).sqrt();
        // Descending (q, p): the p > 0 point first.
        assert!((pts[0].point.q - 0.5).abs() < 1e-10);
        assert!((pts[0].point.p - p_star).abs() < 1e-10);
        assert!((pts[1].point.q - 0.5).abs() < 1e-10);
        assert!((pts[1].point.p + p_star).abs() < 1e-10);
        // {H1,H2} = p(q-1) - qp = -p.
        assert!((pts[0].bracket + p_star).abs() < 1e-9);
        assert!((pts[1].bracket - p_star).abs() < 1e-9);
    }

    #[test]
    fn line_intersections_match_closed_form() {
        let h1 = shifted_oscillator(0.0);
        let h2 = momentum();
        let pts = intersect_level_sets(&h1, 1.0, &h2, 0.5).unwrap();
        assert_eq!(pts.len(), 2);
        let q_star = (2.0f64 - 0.25).sqrt();
        assert!((pts[0].point.q - q_star).abs() < 1e-10);
        assert!((pts[0].point.p - 0.5).abs() < 1e-12);
        assert!((pts[1].point.q + q_star).abs() < 1e-10);
        // {H1, p} = -H1q = -q.
        assert!((pts[0].bracket + q_star).abs() < 1e-9);
        assert!((pts[1].bracket - q_star).abs() < 1e-9);
    }

    #[test]
    fn quartic_tilted_intersections_match_grid_scan_oracle() {
        let h1 = quartic_well();
        // H2 = p²/2 + q²/2 + 0.3 q at b2 = 0.8: its own turning point
        // (0, 1) lies exactly on the quartic curve — a tangential contact —
        // while the transversal crossings sit on the fiber q = q*.
        let h2 = PolyHamiltonian::new(vec![
            vec![0.0, 0.3, 0.5],
            vec![0.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.0],
        ])
        .unwrap();

        // Independent oracle: scan H2 - b2 along the upper branch
        // p(q) = sqrt(2(1 - q^4)) and bisect each sign change.
        let f = |q: f64| {
            let p = (2.0 * (1.0 - q.powi(4))).max(0.0).sqrt();
            h2.eval(p, q) - 0.8
        };
        let m = 4000;
        let mut roots = Vec::new();
        for i in 0..m {
            let mut a = -1.0 + 2.0 * i as f64 / m as f64;
            let mut b = -1.0 + 2.0 * (i + 1) as f64 / m as f64;
            if f(a) * f(b) < 0.0 {
                for _ in 0..100 {
                    let mid = 0.5 * (a + b);
                    if f(a) * f(mid) <= 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                roots.push(0.5 * (a + b));
            }
        }
        assert_eq!(roots.len(), 1, "oracle roots: {roots:?}");
        let q_star = roots[0];
        let p_star = (2.0 * (1.0 - q_star.powi(4))).sqrt();

        let found = find_intersections(&h1, 1.0, &h2, 0.8).unwrap();
        assert_eq!(found.points.len(), 2, "points: {:?}", found.points);
        assert_eq!(found.tangential.len(), 1, "tangential: {:?}", found.tangential);
        let t = found.tangential[0].point;
        assert!(t.p.abs() < 1e-5 && (t.q - 1.0).abs() < 1e-5, "touch point {t:?}");
        for pt in &found.points {
            assert!((pt.point.q - q_star).abs() < 1e-8, "q {} vs {}", pt.point.q, q_star);
            assert!((pt.point.p.abs() - p_star).abs() < 1e-8);
        }
        assert!(matches!(
            intersect_level_sets(&h1, 1.0, &h2, 0.8),
            Err(OverlapError::TangentialIntersection { .. })
        ));
    }

    #[test]
    fn action_difference_gives_lens_area() {
        let h1 = shifted_oscillator(0.0);
        let h2 = shifted_oscillator(1.0);
        let l1 = trace_auto(&h1, 1.0).unwrap();
        let l2 = trace_auto(&h2, 1.0).unwrap();
        let pts = intersect_level_sets(&h1, 1.0, &h2, 1.0).unwrap();
        let (c_plus, c_minus) = (pts[0].point, pts[1].point);

        assert_eq!(action_difference(&l1, &l2, c_plus, c_plus).unwrap(), 0.0);

        let lens = lens_area(2.0f64.sqrt(), 1.0);
        let ds = action_difference(&l1, &l2, c_minus, c_plus).unwrap();
        assert!((ds - lens).abs() < 1e-9, "ΔS = {ds}, lens = {lens}");

        // Swapping the endpoints reverses both arcs.
        let back = action_difference(&l1, &l2, c_plus, c_minus).unwrap();
        assert!((back + ds).abs() < 1e-9, "swap: {back} vs {ds}");
    }

    #[test]
    fn relative_maslov_closed_forms() {
        let h1 = shifted_oscillator(0.0);
        let l1 = oscillator_set(1.0);
        let p_mom = momentum();

        // Constant-sign arc: {H1,p} = -q stays negative from (1,1) to (-1,1).
        let a = PhasePoint::new(1.0, 1.0);
        let b = PhasePoint::new(-1.0, 1.0);
        assert_eq!(relative_maslov(&l1, &p_mom, b, a).unwrap(), 0);

        // One zero of -q crossed on the way to (-1,-1), forward.
        let c = PhasePoint::new(-1.0, -1.0);
        assert_eq!(relative_maslov(&l1, &p_mom, c, a).unwrap(), -1);
        // Reversed arc: the count flips sign.
        assert_eq!(relative_maslov(&l1, &p_mom, a, c).unwrap(), 1);

        // Coincident endpoints walk the whole loop: net count 2, forward.
        assert_eq!(relative_maslov(&l1, &p_mom, a, a).unwrap(), -2);

        // Two-circle configuration: forward arc from c+ to c- crosses the
        // single zero of {H1,H2} = -p at the right turning point.
        let h2 = shifted_oscillator(1.0);
        let pts = intersect_level_sets(&h1, 1.0, &h2, 1.0).unwrap();
        let mu = relative_maslov(&l1, &h2, pts[1].point, pts[0].point).unwrap();
        assert_eq!(mu, -1);

        // Endpoint on the bracket zero set: undefined.
        let bad = PhasePoint::new(2.0f64.sqrt(), 0.0);
        assert!(matches!(
            relative_maslov(&l1, &p_mom, bad, a),
            Err(OverlapError::TangencyAtEndpoint)
        ));
    }

    #[test]
    fn tangential_contact_is_rejected_by_the_strict_op() {
        // Unit circles centered at q = 0 and q = 2 touch at (0, 1).
        let h1 = shifted_oscillator(0.0);
        let h2 = shifted_oscillator(2.0);
        let res = intersect_level_sets(&h1, 0.5, &h2, 0.5);
        assert!(matches!(res, Err(OverlapError::TangentialIntersection { .. })));
        let found = find_intersections(&h1, 0.5, &h2, 0.5).unwrap();
        assert!(found.points.is_empty());
        assert_eq!(found.tangential.len(), 1);
        assert!((found.tangential[0].point.q - 1.0).abs() < 1e-6);
    }

    #[test]
    fn hessian_identity_two_circles_and_line() {
        let h1 = shifted_oscillator(0.0);
        let h2 = shifted_oscillator(1.0);
        let l1 = trace_auto(&h1, 1.0).unwrap();
        let l2 = trace_auto(&h2, 1.0).unwrap();
        let pts = intersect_level_sets(&h1, 1.0, &h2, 1.0).unwrap();
        for c in &pts {
            let r = verify_hessian_identity(&l1, &l2, c).unwrap();
            assert!(r < 1e-4, "two-circle residual {r} at p = {}", c.point.p);
        }

        let p_mom = momentum();
        let line_pts = intersect_level_sets(&h1, 1.0, &p_mom, 0.5).unwrap();
        for c in &line_pts {
            let r = verify_hessian_identity_line(&l1, &p_mom, 0.5, c).unwrap();
            assert!(r < 1e-4, "line residual {r} at q = {}", c.point.q);
        }
    }

    #[test]
    fn two_circle_overlap_matches_interference_closed_form() {
        // hbar with b = 1 on a Bohr-Sommerfeld level of both oscillators.
        let hbar = 1.0 / 9.5;
        let h1 = shifted_oscillator(0.0);
        let h2 = shifted_oscillator(1.0);
        let ov = overlap_asymptotic(&h1, 1.0, &h2, 1.0, hbar).unwrap();
        assert_eq!(ov.contributions.len(), 2);

        let p_star = (7.0f64 / 4.0).sqrt();
        let lens = lens_area(2.0f64.sqrt(), 1.0);
        let expect = 2.0 * (lens / (2.0 * hbar) - std::f64::consts::FRAC_PI_4).cos().abs()
            / ((2.0 * PI * hbar).sqrt() * p_star.sqrt());
        assert!(
            (ov.modulus() - expect).abs() < 1e-8 * expect.max(1.0),
            "modulus {} vs closed form {}",
            ov.modulus(),
            expect
        );
        assert!(ov.base_phase.is_some());
        assert!((ov.physical_total().unwrap().norm() - ov.modulus()).abs() < 1e-14);
        assert!((ov.period1 - 2.0 * PI).abs() < 1e-8);
        assert!((ov.period2.unwrap() - 2.0 * PI).abs() < 1e-8);
    }

    #[test]
    fn reference_choice_only_rotates_the_total() {
        let hbar = 1.0 / 9.5;
        let h1 = shifted_oscillator(0.0);
        let h2 = shifted_oscillator(1.0);
        let l1 = trace_auto(&h1, 1.0).unwrap();
        let pts = intersect_level_sets(&h1, 1.0, &h2, 1.0).unwrap();
        let second = SecondCurve::Closed(&trace_auto(&h2, 1.0).unwrap());

        // Compose the total against each reference choice by hand.
        let mut moduli = Vec::new();
        for c0 in &pts {
            let mut total = C64::new(0.0, 0.0);
            for c in &pts {
                let (ds, mu) = if c.point.dist(&c0.point) <= DEDUP_RADIUS {
                    (0.0, 0)
                } else {
                    (
                        action_difference_geom(&l1, &second, c.point, c0.point).unwrap(),
                        relative_maslov(&l1, &h2, c.point, c0.point).unwrap(),
                    )
                };
                total += C64::from_polar(
                    c.bracket.abs().powf(-0.5),
                    ds / hbar + FRAC_PI_2 * mu as f64,
                );
            }
            moduli.push(total.norm());
        }
        assert!(
            (moduli[0] - moduli[1]).abs() < 1e-10 * moduli[0].max(1.0),
            "reference dependence: {moduli:?}"
        );
    }

    #[test]
    fn long_way_rerouting_shifts_phases_by_whole_turns() {
        // On BS levels the term phase is arc-independent mod 2π: rerouting
        // γ1 the long way trades action A1 against Maslov compensation.
        let hbar = 1.0 / 9.5;
        let h1 = shifted_oscillator(0.0);
        let h2 = shifted_oscillator(1.0);
        let l1 = trace_auto(&h1, 1.0).unwrap();
        let l2 = trace_auto(&h2, 1.0).unwrap();
        let pts = intersect_level_sets(&h1, 1.0, &h2, 1.0).unwrap();
        let (c0, c) = (pts[0].point, pts[1].point);

        // Canonical (shorter, forward) arc phase.
        let second = SecondCurve::Closed(&l2);
        let ds = action_difference_geom(&l1, &second, c, c0).unwrap();
        let mu = relative_maslov(&l1, &h2, c, c0).unwrap();
        let phase_short = ds / hbar + FRAC_PI_2 * mu as f64;

        // Long way: backward γ1 arc from c0 to c plus the same γ2 return.
        let path_long = l1.path_between(c0, c, Direction::Backward).unwrap();
        let s1_long = action_along(&path_long);
        let bracket = h1.poisson_bracket(&h2);
        let vals: Vec<f64> =
            path_long.samples().iter().map(|x| bracket.eval(x.p, x.q)).collect();
        let mut count = 0;
        let mut last = vals[0];
        for &v in &vals[1..] {
            if v != 0.0 {
                if v.signum() != last.signum() {
                    count += 1;
                }
                last = v;
            }
        }
        let mu_long = count; // backward traversal: +1 per crossing
        let (path2, _) = canonical_arc(&l2, c, c0).unwrap();
        let s2 = action_along(&path2);
        let phase_long = (s1_long + s2) / hbar + FRAC_PI_2 * mu_long as f64;

        let turns = (phase_long - phase_short) / (2.0 * PI);
        assert!(
            (turns - turns.round()).abs() < 1e-6,
            "rerouting changed the phase by {turns} turns"
        );
    }

    #[test]
    fn swapping_the_systems_preserves_the_modulus() {
        let hbar = 1.0 / 9.5;
        let h1 = shifted_oscillator(0.0);
        let h2 = shifted_oscillator(1.0);
        let a = overlap_asymptotic(&h1, 1.0, &h2, 1.0, hbar).unwrap();
        let b = overlap_asymptotic(&h2, 1.0, &h1, 1.0, hbar).unwrap();
        assert!(
            (a.modulus() - b.modulus()).abs() < 1e-10 * a.modulus().max(1.0),
            "{} vs {}",
            a.modulus(),
            b.modulus()
        );
    }

    #[test]
    fn non_bs_levels_are_rejected() {
        let hbar = 1.0 / 9.5;
        let h1 = shifted_oscillator(0.0);
        let h2 = shifted_oscillator(1.0);
        let res = overlap_asymptotic(&h1, 1.037, &h2, 1.0, hbar);
        assert!(matches!(res, Err(OverlapError::NotBohrSommerfeld { which: 1, .. })));
        let res = overlap_asymptotic(&h1, 1.0, &h2, 1.043, hbar);
        assert!(matches!(res, Err(OverlapError::NotBohrSommerfeld { which: 2, .. })));
    }

    #[test]
    fn momentum_fiber_reduces_to_the_swapped_wkb_state() {
        // With H2 = p the overlap against the plane wave is the momentum-
        // space WKB eigenfunction: |total|·√(2πh) equals the branch-sum
        // modulus of the swapped state at q = p_line.
        let hbar = 1.0 / 4.5;
        let h1 = shifted_oscillator(0.0);
        let p_mom = momentum();
        let swapped = h1.swap_pq();
        let st = WkbState::new(trace_auto(&swapped, 1.0).unwrap(), hbar).unwrap();
        for p_line in [0.3, 0.6, -0.45, 1.1] {
            let ov = overlap_asymptotic(&h1, 1.0, &p_mom, p_line, hbar).unwrap();
            assert!(ov.period2.is_none());
            let got = ov.modulus() * (2.0 * PI * hbar).sqrt();
            let want = st.eval(p_line).norm();
            assert!(
                (got - want).abs() < 1e-10 * want.max(1.0),
                "p_line {p_line}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn asymptotic_modulus_tracks_the_exact_oracle() {
        // Cheap mid-resolution check; the acceptance suite sharpens it.
        let hbar = 0.25;
        let n1 = 3usize;
        let n2 = 3usize;
        let h1 = shifted_oscillator(0.0);
        let h2 = shifted_oscillator(1.0);
        let b1 = hbar * (n1 as f64 + 0.5);
        let b2 = hbar * (n2 as f64 + 0.5);
        let ov = overlap_asymptotic(&h1, b1, &h2, b2, hbar).unwrap();
        let grid = QuantumGrid::new(128, hbar, -4.0, 5.0).unwrap();
        let exact = overlap_exact(&h1, n1, &h2, n2, &grid).unwrap().norm();
        let asym = ov.normalized_modulus().unwrap();
        let rel = (asym - exact).abs() / exact;
        assert!(rel < 0.25, "asym {asym} vs exact {exact}: rel {rel}");
    }

    #[test]
    fn exact_oracle_is_orthonormal_on_one_basis() {
        let grid = QuantumGrid::new(64, 1.0, -6.0, 6.0).unwrap();
        let h = shifted_oscillator(0.0);
        let same = overlap_exact(&h, 3, &h, 3, &grid).unwrap();
        assert!((same.norm() - 1.0).abs() < 1e-10);
        let cross = overlap_exact(&h, 2, &h, 3, &grid).unwrap();
        assert!(cross.norm() < 1e-10);
    }

    #[test]
    fn grid_mismatch_is_detected() {
        let h = shifted_oscillator(0.0);
        let g1 = QuantumGrid::new(64, 1.0, -6.0, 6.0).unwrap();
        let g2 = QuantumGrid::new(64, 1.0, -5.0, 6.0).unwrap();
        let b1 = eigenbasis(&h, &g1, 2).unwrap();
        let b2 = eigenbasis(&h, &g2, 2).unwrap();
        assert!(matches!(basis_overlap(&b1, 1, &b2, 1), Err(OverlapError::GridMismatch)));
        assert!(matches!(
            basis_overlap(&b1, 5, &b1, 1),
            Err(OverlapError::StateIndex { n: 5, len: 2 })
        ));
    }
}
