//! Level-curve geometry of polynomial Hamiltonians.
//!
//! A regular compact component of `{H = b}` is traced into a closed,
//! positively oriented polyline (positive meaning the enclosed symplectic
//! area `∮ p dq` is positive). Turning points, where the curve is tangent
//! to a cotangent fiber `q = const`, are refined onto the polyline as
//! exact samples. All phase bookkeeping downstream is built from arcs of
//! that polyline:
//!
//! * actions are polyline trapezoid sums, refined by projected midpoint
//!   insertion with Richardson extrapolation;
//! * the Maslov index of an arc adds `sign(dp) * sign(alpha)` at every
//!   turning point crossed, which makes a convex loop count +2.

use crate::hamiltonian::{PolyHamiltonian, Var};
use crate::numerics::real_poly_roots;
use crate::tolerances::*;
use std::io::{self, Write};
use thiserror::Error;

/// Point of the phase plane. The momentum coordinate comes first
/// throughout the crate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    pub p: f64,
    pub q: f64,
}

impl PhasePoint {
    pub fn new(p: f64, q: f64) -> Self {
        PhasePoint { p, q }
    }

    pub fn dist(&self, other: &PhasePoint) -> f64 {
        ((self.p - other.p).powi(2) + (self.q - other.q).powi(2)).sqrt()
    }
}

/// Sign quadrant of a simple turning point, after the four local normal
/// forms: the signs of (dH/dq, d2H/dp2) are a: (-,+), b: (-,-), c: (+,-),
/// d: (+,+).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TurningKind {
    A,
    B,
    C,
    D,
}

#[derive(Clone, Copy, Debug)]
pub struct TurningPoint {
    pub point: PhasePoint,
    /// `-(dH/dq) / (d2H/dp2)` at the point. The local comparison ODE of
    /// the eigenfunction problem carries the opposite sign; see
    /// `wkb::connection_ratio`.
    pub alpha: f64,
    pub kind: TurningKind,
}

#[derive(Debug, Error)]
pub enum LevelCurveError {
    #[error("Hamiltonian does not depend on p; no turning-point structure")]
    NotMomentumDependent,
    #[error("seed point could not be projected onto the level curve")]
    SeedProjectionFailed,
    #[error("gradient vanishes near the seed; b is a critical value")]
    CriticalPoint,
    #[error("curve left the tracing box without closing (non-compact component?)")]
    NotClosed,
    #[error("step size collapsed below {EPS_STEP}; curvature too extreme")]
    StepCollapse,
    #[error("turning point at (p={p:.6}, q={q:.6}) is not simple")]
    NonSimpleTurningPoint { p: f64, q: f64 },
    #[error("two fiber roots within {TOL_TURN}; the fiber is tangent to the curve")]
    NearTangency,
    #[error("fiber polynomial vanished identically")]
    DegenerateFiber,
    #[error("point (p={p:.6}, q={q:.6}) is not on the level curve")]
    PointNotOnCurve { p: f64, q: f64 },
    #[error("path endpoint sits on a turning point")]
    EndpointAtTurningPoint,
}

/// Traversal sense relative to the stored positive orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Closed, positively oriented sample loop of one compact component of
/// `{H = b}`, with its turning points refined in as exact samples.
pub struct LevelSet {
    h: PolyHamiltonian,
    b: f64,
    samples: Vec<PhasePoint>,
    /// Parallel to `samples`: index into `turning_points` when the sample
    /// is a turning point.
    turning_flags: Vec<Option<usize>>,
    turning_points: Vec<TurningPoint>,
    hp: PolyHamiltonian,
}

/// Maximal arc of a level set on which `q` is strictly monotone, i.e. the
/// piece between two consecutive turning points. `branch_id` is the
/// position of this branch in the descending fiber-root list at the
/// midpoint of `q_range`.
pub struct Branch {
    pub branch_id: usize,
    pub q_range: (f64, f64),
    /// Arc samples ordered by increasing q.
    pub samples: Vec<PhasePoint>,
}

/// Arc of a level set between two curve points, together with the turning
/// points it crosses. Sample order encodes the traversal direction.
pub struct CurvePath<'a> {
    level_set: &'a LevelSet,
    samples: Vec<PhasePoint>,
    /// `(turning point index, sign of dp across the crossing)` in
    /// traversal order.
    crossings: Vec<(usize, i8)>,
}

/// Solves the fiber equation `H(p, q) = b` for `p`; roots sorted
/// descending. An empty fiber returns an empty list. Root pairs closer
/// than `TOL_TURN` (or complex pairs about to become real) indicate the
/// fiber is tangent to the curve and are rejected.
pub fn solve_branches(
    h: &PolyHamiltonian,
    b: f64,
    q: f64,
) -> Result<Vec<f64>, LevelCurveError> {
    let mut coeffs = h.p_poly_at_q(q);
    coeffs[0] -= b;
    let roots = real_poly_roots(&coeffs);
    if roots.degenerate {
        return Err(LevelCurveError::DegenerateFiber);
    }
    if 2.0 * roots.complex_pair_gap <= TOL_TURN {
        return Err(LevelCurveError::NearTangency);
    }
    for w in roots.real.windows(2) {
        if (w[0] - w[1]).abs() <= TOL_TURN {
            return Err(LevelCurveError::NearTangency);
        }
    }
    Ok(roots.real)
}

struct Derivs {
    hp: PolyHamiltonian,
    hq: PolyHamiltonian,
    hpp: PolyHamiltonian,
    hpq: PolyHamiltonian,
    hqq: PolyHamiltonian,
}

impl Derivs {
    fn of(h: &PolyHamiltonian) -> Self {
        let hp = h.partial(Var::P);
        let hq = h.partial(Var::Q);
        Derivs {
            hpp: hp.partial(Var::P),
            hpq: hp.partial(Var::Q),
            hqq: hq.partial(Var::Q),
            hp,
            hq,
        }
    }

    fn grad(&self, x: PhasePoint) -> (f64, f64) {
        (self.hp.eval(x.p, x.q), self.hq.eval(x.p, x.q))
    }

    /// Curvature of the level curve through `x`.
    fn curvature(&self, x: PhasePoint) -> f64 {
        let (gp, gq) = self.grad(x);
        let n2 = gp * gp + gq * gq;
        if n2 == 0.0 {
            return f64::INFINITY;
        }
        let hpp = self.hpp.eval(x.p, x.q);
        let hpq = self.hpq.eval(x.p, x.q);
        let hqq = self.hqq.eval(x.p, x.q);
        (hpp * gq * gq - 2.0 * hpq * gp * gq + hqq * gp * gp).abs() / n2.powf(1.5)
    }
}

/// Newton projection onto `{H = b}` along the gradient direction.
fn project_to_curve(
    h: &PolyHamiltonian,
    derivs: &Derivs,
    b: f64,
    mut x: PhasePoint,
) -> Option<PhasePoint> {
    let tol = PROJECTION_TOL * b.abs().max(1.0);
    for _ in 0..100 {
        let r = h.eval(x.p, x.q) - b;
        if r.abs() <= tol {
            return Some(x);
        }
        let (gp, gq) = derivs.grad(x);
        let n2 = gp * gp + gq * gq;
        if n2 < 1e-300 {
            return None;
        }
        let s = r / n2;
        x = PhasePoint::new(x.p - s * gp, x.q - s * gq);
    }
    None
}

/// Traces the compact component of `{H = b}` through `seed` into a
/// positively oriented closed polyline and locates its turning points.
pub fn trace_level_curve(
    h: &PolyHamiltonian,
    b: f64,
    seed: PhasePoint,
) -> Result<LevelSet, LevelCurveError> {
    if h.deg_p() == 0 {
        return Err(LevelCurveError::NotMomentumDependent);
    }
    let derivs = Derivs::of(h);
    let start =
        project_to_curve(h, &derivs, b, seed).ok_or(LevelCurveError::SeedProjectionFailed)?;
    let (gp0, gq0) = derivs.grad(start);
    if (gp0 * gp0 + gq0 * gq0).sqrt() < 1e-9 {
        return Err(LevelCurveError::CriticalPoint);
    }

    // Coarse pass estimates the perimeter, the fine pass spends a fixed
    // sample budget on it.
    let scale0 = 1.0 + start.p.abs().max(start.q.abs());
    let coarse = march(h, &derivs, b, start, 0.05 * scale0, 0.08)?;
    let perimeter: f64 = coarse.windows(2).map(|w| w[0].dist(&w[1])).sum();
    let ds_max = (perimeter / 800.0).min(0.05 * scale0).max(4.0 * EPS_STEP);
    let samples = march(h, &derivs, b, start, ds_max, 0.03)?;

    let mut samples = orient_positive(samples);

    // Turning points: sign changes of dH/dp between consecutive samples,
    // refined by a 2D Newton solve of (H - b, dH/dp) = 0.
    let n = samples.len();
    let mut found: Vec<(usize, TurningPoint)> = Vec::new();
    for i in 0..n {
        let a = samples[i];
        let c = samples[(i + 1) % n];
        let ga = derivs.hp.eval(a.p, a.q);
        let gc = derivs.hp.eval(c.p, c.q);
        if ga == 0.0 || ga * gc >= 0.0 {
            if ga == 0.0 {
                // A sample landing exactly on the tangency; refine from it.
                let tp = refine_turning_point(h, &derivs, b, a)?;
                found.push((i, tp));
            }
            continue;
        }
        let mid = PhasePoint::new(0.5 * (a.p + c.p), 0.5 * (a.q + c.q));
        let tp = refine_turning_point(h, &derivs, b, mid)?;
        found.push((i, tp));
    }

    // Splice the refined points into the loop as flagged samples. A
    // turning point nearly coincident with an existing sample replaces it
    // so that no zero-length segment appears.
    let mut turning_points = Vec::new();
    let mut flagged: Vec<(PhasePoint, Option<usize>)> =
        samples.drain(..).map(|s| (s, None)).collect();
    found.sort_by(|x, y| x.0.cmp(&y.0));
    let mut offset = 0usize;
    for (seg, tp) in found {
        let idx = turning_points.len();
        let at = seg + offset;
        let next = (at + 1) % flagged.len();
        let min_gap = 1e-9 * (1.0 + tp.point.p.abs() + tp.point.q.abs());
        if flagged[at].0.dist(&tp.point) < min_gap {
            flagged[at] = (tp.point, Some(idx));
        } else if flagged[next].0.dist(&tp.point) < min_gap {
            flagged[next] = (tp.point, Some(idx));
        } else {
            flagged.insert(at + 1, (tp.point, Some(idx)));
            offset += 1;
        }
        turning_points.push(tp);
    }

    let turning_flags: Vec<Option<usize>> = flagged.iter().map(|f| f.1).collect();
    let samples: Vec<PhasePoint> = flagged.into_iter().map(|f| f.0).collect();

    Ok(LevelSet {
        hp: derivs.hp.clone(),
        h: h.clone(),
        b,
        samples,
        turning_flags,
        turning_points,
    })
}

/// One predictor-corrector march around the curve. RK4 on the normalized
/// Hamiltonian field `(dp, dq) = (-H_q, H_p)/|grad H|`, then a gradient
/// projection back onto the curve.
fn march(
    h: &PolyHamiltonian,
    derivs: &Derivs,
    b: f64,
    start: PhasePoint,
    ds_max: f64,
    theta_max: f64,
) -> Result<Vec<PhasePoint>, LevelCurveError> {
    let unit_tangent = |x: PhasePoint| -> Option<(f64, f64)> {
        let (gp, gq) = derivs.grad(x);
        let n = (gp * gp + gq * gq).sqrt();
        if n < 1e-300 {
            None
        } else {
            Some((-gq / n, gp / n))
        }
    };

    let bound = 1e4 * (1.0 + start.p.abs().max(start.q.abs()));
    let mut pts = vec![start];
    let mut x = start;
    let mut travelled = 0.0f64;
    for _ in 0..500_000 {
        let kappa = derivs.curvature(x);
        let ds = (theta_max / kappa.max(1e-12)).min(ds_max);
        if ds < EPS_STEP {
            return Err(LevelCurveError::StepCollapse);
        }
        // RK4 predictor on the unit tangent field.
        let t1 = unit_tangent(x).ok_or(LevelCurveError::CriticalPoint)?;
        let x2 = PhasePoint::new(x.p + 0.5 * ds * t1.0, x.q + 0.5 * ds * t1.1);
        let t2 = unit_tangent(x2).ok_or(LevelCurveError::CriticalPoint)?;
        let x3 = PhasePoint::new(x.p + 0.5 * ds * t2.0, x.q + 0.5 * ds * t2.1);
        let t3 = unit_tangent(x3).ok_or(LevelCurveError::CriticalPoint)?;
        let x4 = PhasePoint::new(x.p + ds * t3.0, x.q + ds * t3.1);
        let t4 = unit_tangent(x4).ok_or(LevelCurveError::CriticalPoint)?;
        let pred = PhasePoint::new(
            x.p + ds / 6.0 * (t1.0 + 2.0 * t2.0 + 2.0 * t3.0 + t4.0),
            x.q + ds / 6.0 * (t1.1 + 2.0 * t2.1 + 2.0 * t3.1 + t4.1),
        );
        let next =
            project_to_curve(h, derivs, b, pred).ok_or(LevelCurveError::SeedProjectionFailed)?;
        if next.p.abs() > bound || next.q.abs() > bound {
            return Err(LevelCurveError::NotClosed);
        }
        travelled += x.dist(&next);
        x = next;
        // Loop closure: back at the start after a meaningful excursion.
        if travelled > 10.0 * ds_max && x.dist(&start) < 1.5 * ds {
            pts.push(x);
            return Ok(pts);
        }
        pts.push(x);
    }
    Err(LevelCurveError::NotClosed)
}

fn orient_positive(mut samples: Vec<PhasePoint>) -> Vec<PhasePoint> {
    let n = samples.len();
    let mut area = 0.0;
    for i in 0..n {
        let a = samples[i];
        let b = samples[(i + 1) % n];
        area += 0.5 * (a.p + b.p) * (b.q - a.q);
    }
    if area < 0.0 {
        samples.reverse();
    }
    samples
}

fn refine_turning_point(
    h: &PolyHamiltonian,
    derivs: &Derivs,
    b: f64,
    mut x: PhasePoint,
) -> Result<TurningPoint, LevelCurveError> {
    // Newton on (H - b, H_p) = 0; the Jacobian determinant is
    // -H_q * H_pp, nonzero exactly when the turning point is simple.
    let mut converged = false;
    for _ in 0..80 {
        let f1 = h.eval(x.p, x.q) - b;
        let f2 = derivs.hp.eval(x.p, x.q);
        let j11 = derivs.hp.eval(x.p, x.q);
        let j12 = derivs.hq.eval(x.p, x.q);
        let j21 = derivs.hpp.eval(x.p, x.q);
        let j22 = derivs.hpq.eval(x.p, x.q);
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-300 {
            break;
        }
        let dp = (f1 * j22 - f2 * j12) / det;
        let dq = (f2 * j11 - f1 * j21) / det;
        x = PhasePoint::new(x.p - dp, x.q - dq);
        if dp.abs() + dq.abs() <= 1e-15 * (1.0 + x.p.abs() + x.q.abs()) {
            converged = true;
            break;
        }
    }
    let resid = (h.eval(x.p, x.q) - b).abs() + derivs.hp.eval(x.p, x.q).abs();
    if !converged && resid > TOL_TURN {
        return Err(LevelCurveError::NonSimpleTurningPoint { p: x.p, q: x.q });
    }
    let hq = derivs.hq.eval(x.p, x.q);
    let hpp = derivs.hpp.eval(x.p, x.q);
    if hq.abs() <= TOL_SIMPLE || hpp.abs() <= TOL_SIMPLE {
        return Err(LevelCurveError::NonSimpleTurningPoint { p: x.p, q: x.q });
    }
    let kind = match (hq > 0.0, hpp > 0.0) {
        (false, true) => TurningKind::A,
        (false, false) => TurningKind::B,
        (true, false) => TurningKind::C,
        (true, true) => TurningKind::D,
    };
    Ok(TurningPoint { point: x, alpha: -hq / hpp, kind })
}

impl LevelSet {
    pub fn hamiltonian(&self) -> &PolyHamiltonian {
        &self.h
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Loop samples in positive orientation (closed implicitly; the first
    /// sample is not repeated at the end).
    pub fn samples(&self) -> &[PhasePoint] {
        &self.samples
    }

    pub fn turning_points(&self) -> &[TurningPoint] {
        &self.turning_points
    }

    /// Parallel to [`samples`](Self::samples): the turning-point index of
    /// each flagged sample.
    pub fn turning_flags(&self) -> &[Option<usize>] {
        &self.turning_flags
    }

    /// Sample indices of the turning points, in loop order.
    pub fn turning_sample_indices(&self) -> Vec<usize> {
        let mut out: Vec<(usize, usize)> = self
            .turning_flags
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.map(|tp| (i, tp)))
            .collect();
        out.sort();
        out.into_iter().map(|(i, _)| i).collect()
    }

    /// Newton projection of an arbitrary nearby point onto the curve.
    pub fn project(&self, x: PhasePoint) -> Option<PhasePoint> {
        let derivs = Derivs::of(&self.h);
        project_to_curve(&self.h, &derivs, self.b, x)
    }

    pub(crate) fn locate(&self, x: PhasePoint) -> (usize, f64) {
        // Nearest polyline segment and the parameter along it.
        let n = self.samples.len();
        let mut best = (0usize, 0.0f64, f64::INFINITY);
        for i in 0..n {
            let a = self.samples[i];
            let b = self.samples[(i + 1) % n];
            let vx = b.p - a.p;
            let vy = b.q - a.q;
            let len2 = vx * vx + vy * vy;
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((x.p - a.p) * vx + (x.q - a.q) * vy) / len2).clamp(0.0, 1.0)
            };
            let proj = PhasePoint::new(a.p + t * vx, a.q + t * vy);
            let d = x.dist(&proj);
            if d < best.2 {
                best = (i, t, d);
            }
        }
        let (i, t, _) = best;
        if t > 1.0 - 1e-9 {
            ((i + 1) % self.samples.len(), 0.0)
        } else {
            (i, t)
        }
    }

    /// Assembles the arc from `from` to `to` walking the loop in the given
    /// direction (first encounter). Both endpoints must lie on the curve
    /// and away from turning points.
    pub fn path_between(
        &self,
        from: PhasePoint,
        to: PhasePoint,
        direction: Direction,
    ) -> Result<CurvePath<'_>, LevelCurveError> {
        let scale = self.b.abs().max(1.0);
        for x in [from, to] {
            if (self.h.eval(x.p, x.q) - self.b).abs() > TOL_CURVE * scale {
                return Err(LevelCurveError::PointNotOnCurve { p: x.p, q: x.q });
            }
            for tp in &self.turning_points {
                if x.dist(&tp.point) <= TOL_TURN {
                    return Err(LevelCurveError::EndpointAtTurningPoint);
                }
            }
        }
        let from = self.project(from).ok_or(LevelCurveError::SeedProjectionFailed)?;
        let to = self.project(to).ok_or(LevelCurveError::SeedProjectionFailed)?;

        let n = self.samples.len();
        let (i_f, t_f) = self.locate(from);
        let (i_t, t_t) = self.locate(to);

        // Unwrapped positions along the loop in units of sample index.
        // The interior of the arc is the set of integer positions strictly
        // between the endpoint positions; coincident endpoints give the
        // whole loop (first encounter going all the way around).
        let nf = n as f64;
        let pos_f = i_f as f64 + t_f;
        let pos_t = i_t as f64 + t_t;
        let mut samples = vec![from];
        let mut interior: Vec<usize> = Vec::new();
        match direction {
            Direction::Forward => {
                let mut delta = pos_t - pos_f;
                if delta <= 1e-15 {
                    delta += nf;
                }
                let k_lo = pos_f.floor() as i64 + 1;
                let k_hi = (pos_f + delta).ceil() as i64 - 1;
                for k in k_lo..=k_hi {
                    interior.push(k.rem_euclid(n as i64) as usize);
                }
            }
            Direction::Backward => {
                let mut delta = pos_f - pos_t;
                if delta <= 1e-15 {
                    delta += nf;
                }
                let back = pos_f - delta;
                let k_hi = pos_f.ceil() as i64 - 1;
                let k_lo = back.floor() as i64 + 1;
                for k in (k_lo..=k_hi).rev() {
                    interior.push(k.rem_euclid(n as i64) as usize);
                }
            }
        }
        // Drop interior samples that coincide with an endpoint.
        let min_gap = 1e-12 * (1.0 + from.p.abs() + from.q.abs());
        let mut crossings = Vec::new();
        for &idx in &interior {
            let s = self.samples[idx];
            if s.dist(&from) < min_gap || s.dist(&to) < min_gap {
                continue;
            }
            samples.push(s);
            if let Some(tp_idx) = self.turning_flags[idx] {
                crossings.push((samples.len() - 1, tp_idx));
            }
        }
        samples.push(to);

        let crossings = crossings
            .into_iter()
            .map(|(pos, tp_idx)| {
                let dp = samples[pos + 1].p - samples[pos - 1].p;
                (tp_idx, if dp >= 0.0 { 1i8 } else { -1i8 })
            })
            .collect();
        Ok(CurvePath { level_set: self, samples, crossings })
    }

    /// The full positively oriented loop as a path starting and ending at
    /// `samples[0]`.
    pub fn full_loop(&self) -> CurvePath<'_> {
        let n = self.samples.len();
        let mut samples: Vec<PhasePoint> = self.samples.clone();
        samples.push(self.samples[0]);
        let mut crossings = Vec::new();
        for i in 1..n {
            if let Some(tp_idx) = self.turning_flags[i] {
                let dp = samples[i + 1].p - samples[i - 1].p;
                crossings.push((tp_idx, if dp >= 0.0 { 1i8 } else { -1i8 }));
            }
        }
        if let Some(tp_idx) = self.turning_flags[0] {
            let dp = samples[1].p - samples[n - 1].p;
            crossings.push((tp_idx, if dp >= 0.0 { 1i8 } else { -1i8 }));
        }
        CurvePath { level_set: self, samples, crossings }
    }

    /// Splits the loop into branches (arcs between consecutive turning
    /// points), each monotone in q and tagged with its descending-root
    /// index at the midpoint of its q-range.
    pub fn branches(&self) -> Result<Vec<Branch>, LevelCurveError> {
        let tp_idx = self.turning_sample_indices();
        if tp_idx.is_empty() {
            return Err(LevelCurveError::NotClosed);
        }
        let n = self.samples.len();
        let mut out = Vec::new();
        for w in 0..tp_idx.len() {
            let start = tp_idx[w];
            let end = tp_idx[(w + 1) % tp_idx.len()];
            let span = (end + n - start) % n;
            if span == 0 {
                continue;
            }
            let mut arc: Vec<PhasePoint> =
                (0..=span).map(|k| self.samples[(start + k) % n]).collect();
            if arc[0].q > arc[arc.len() - 1].q {
                arc.reverse();
            }
            let q_lo = arc[0].q;
            let q_hi = arc[arc.len() - 1].q;
            let q_mid = 0.5 * (q_lo + q_hi);
            let roots = solve_branches(&self.h, self.b, q_mid)?;
            let p_here = self.branch_p_from_samples(&arc, q_mid);
            let branch_id = roots
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (*a - p_here).abs().partial_cmp(&(*b - p_here).abs()).unwrap()
                })
                .map(|(i, _)| i)
                .unwrap_or(0);
            out.push(Branch { branch_id, q_range: (q_lo, q_hi), samples: arc });
        }
        Ok(out)
    }

    fn branch_p_from_samples(&self, arc: &[PhasePoint], q: f64) -> f64 {
        let pos = arc.partition_point(|s| s.q < q);
        let (a, c) = if pos == 0 {
            (arc[0], arc[1.min(arc.len() - 1)])
        } else if pos >= arc.len() {
            (arc[arc.len() - 2], arc[arc.len() - 1])
        } else {
            (arc[pos - 1], arc[pos])
        };
        let t = if (c.q - a.q).abs() < 1e-300 { 0.0 } else { (q - a.q) / (c.q - a.q) };
        let mut p = a.p + t * (c.p - a.p);
        // 1D Newton in p at fixed q onto the exact branch.
        for _ in 0..60 {
            let f = self.h.eval(p, q) - self.b;
            let d = self.hp.eval(p, q);
            if d.abs() < 1e-300 {
                break;
            }
            let step = f / d;
            p -= step;
            if step.abs() <= 1e-15 * (1.0 + p.abs()) {
                break;
            }
        }
        p
    }

    /// Exact branch momentum at `q` on the given branch.
    pub fn branch_p_at(&self, branch: &Branch, q: f64) -> Option<f64> {
        if q < branch.q_range.0 - 1e-12 || q > branch.q_range.1 + 1e-12 {
            return None;
        }
        Some(self.branch_p_from_samples(&branch.samples, q))
    }

    /// `idx,q,p,is_turning_point` rows in loop order, 17 significant
    /// digits.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "idx,q,p,is_turning_point")?;
        for (i, s) in self.samples.iter().enumerate() {
            let flag = if self.turning_flags[i].is_some() { 1 } else { 0 };
            writeln!(w, "{},{:.16e},{:.16e},{}", i, s.q, s.p, flag)?;
        }
        Ok(())
    }
}

impl<'a> CurvePath<'a> {
    pub fn samples(&self) -> &[PhasePoint] {
        &self.samples
    }

    pub fn level_set(&self) -> &LevelSet {
        self.level_set
    }

    pub fn start(&self) -> PhasePoint {
        self.samples[0]
    }

    pub fn end(&self) -> PhasePoint {
        self.samples[self.samples.len() - 1]
    }

    /// Turning points crossed, with the sign of dp across each crossing.
    pub fn crossings(&self) -> &[(usize, i8)] {
        &self.crossings
    }
}

fn polyline_action(pts: &[PhasePoint]) -> f64 {
    let mut acc = 0.0;
    for w in pts.windows(2) {
        acc += 0.5 * (w[0].p + w[1].p) * (w[1].q - w[0].q);
    }
    acc
}

/// `∫ p dq` along the path. Trapezoid sums over the polyline, refined by
/// inserting curve-projected midpoints until the Richardson increment
/// drops below `TOL_ACTION`.
pub fn action_along(path: &CurvePath<'_>) -> f64 {
    action_along_tol(path, TOL_ACTION)
}

/// [`action_along`] with a caller-chosen refinement stop, for callers whose
/// phases must resolve below the default tolerance.
pub(crate) fn action_along_tol(path: &CurvePath<'_>, tol: f64) -> f64 {
    let ls = path.level_set;
    let derivs = Derivs::of(&ls.h);
    let mut pts = path.samples.clone();
    let mut prev = polyline_action(&pts);
    for _ in 0..16 {
        let mut fine = Vec::with_capacity(pts.len() * 2);
        for w in pts.windows(2) {
            fine.push(w[0]);
            let mid = PhasePoint::new(0.5 * (w[0].p + w[1].p), 0.5 * (w[0].q + w[1].q));
            if let Some(on_curve) = project_to_curve(&ls.h, &derivs, ls.b, mid) {
                fine.push(on_curve);
            }
        }
        fine.push(*pts.last().unwrap());
        let cur = polyline_action(&fine);
        let diff = cur - prev;
        pts = fine;
        prev = cur;
        if diff.abs() <= tol {
            // One Richardson step: trapezoid error scales by 1/4 per level.
            return cur + diff / 3.0;
        }
    }
    prev
}

/// `∮ p dq` of the full loop; positive by orientation.
pub fn cycle_action(level_set: &LevelSet) -> f64 {
    action_along(&level_set.full_loop())
}

/// Period of the closed orbit: `T = ∮ ds / |∇H|`, which equals `dA/db`
/// for the loop action `A(b)`. Trapezoid over a midpoint-projected
/// refinement of the loop polyline, with one Richardson step.
pub fn period(level_set: &LevelSet) -> f64 {
    let h = &level_set.h;
    let derivs = Derivs::of(h);
    let weight = |x: &PhasePoint| {
        let gp = derivs.hp.eval(x.p, x.q);
        let gq = derivs.hq.eval(x.p, x.q);
        1.0 / gp.hypot(gq)
    };
    let quad = |pts: &[PhasePoint]| -> f64 {
        let mut acc = 0.0;
        for w in pts.windows(2) {
            let ds = w[0].dist(&w[1]);
            acc += 0.5 * (weight(&w[0]) + weight(&w[1])) * ds;
        }
        acc
    };
    let mut pts: Vec<PhasePoint> = level_set.samples.to_vec();
    pts.push(level_set.samples[0]);
    let mut prev = quad(&pts);
    for _ in 0..8 {
        let mut fine = Vec::with_capacity(pts.len() * 2);
        for w in pts.windows(2) {
            fine.push(w[0]);
            let mid = PhasePoint::new(0.5 * (w[0].p + w[1].p), 0.5 * (w[0].q + w[1].q));
            match project_to_curve(h, &derivs, level_set.b, mid) {
                Some(m) => fine.push(m),
                None => fine.push(mid),
            }
        }
        fine.push(*pts.last().unwrap());
        let cur = quad(&fine);
        let diff = cur - prev;
        pts = fine;
        prev = cur;
        if diff.abs() <= 1e-12 * cur.abs().max(1.0) {
            return cur + diff / 3.0;
        }
    }
    prev
}

/// Maslov index of the arc: every crossed turning point contributes
/// `sign(dp) * sign(alpha)`. A positively traversed convex loop counts +2.
pub fn maslov_index(path: &CurvePath<'_>) -> i32 {
    path.crossings
        .iter()
        .map(|&(tp_idx, dp_sign)| {
            let alpha = path.level_set.turning_points[tp_idx].alpha;
            dp_sign as i32 * if alpha > 0.0 { 1 } else { -1 }
        })
        .sum()
}

/// Loop Maslov index in the positive orientation.
pub fn loop_maslov_index(level_set: &LevelSet) -> i32 {
    maslov_index(&level_set.full_loop())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::shifted_oscillator;

    fn oscillator_set(b: f64) -> LevelSet {
        trace_level_curve(&shifted_oscillator(0.0), b, PhasePoint::new(0.0, (2.0 * b).sqrt()))
            .unwrap()
    }

    #[test]
    fn oscillator_loop_has_area_two_pi() {
        let ls = oscillator_set(1.0);
        let scale = 1.0;
        for s in ls.samples() {
            assert!((ls.hamiltonian().eval(s.p, s.q) - 1.0).abs() <= TOL_CURVE * scale);
        }
        let area = cycle_action(&ls);
        assert!((area - 2.0 * std::f64::consts::PI).abs() < 1e-9, "area {area}");
    }

    #[test]
    fn oscillator_turning_points() {
        let ls = oscillator_set(1.0);
        let tps = ls.turning_points();
        assert_eq!(tps.len(), 2);
        let r = 2.0f64.sqrt();
        let mut by_q: Vec<&TurningPoint> = tps.iter().collect();
        by_q.sort_by(|a, b| a.point.q.partial_cmp(&b.point.q).unwrap());
        // Left tp: H_q = -r < 0, H_pp = 1 -> kind a, alpha = +r.
        assert!((by_q[0].point.q + r).abs() < 1e-8);
        assert!(by_q[0].point.p.abs() < 1e-8);
        assert_eq!(by_q[0].kind, TurningKind::A);
        assert!((by_q[0].alpha - r).abs() < 1e-8);
        // Right tp: kind d, alpha = -r.
        assert!((by_q[1].point.q - r).abs() < 1e-8);
        assert_eq!(by_q[1].kind, TurningKind::D);
        assert!((by_q[1].alpha + r).abs() < 1e-8);
    }

    #[test]
    fn oscillator_loop_maslov_is_two() {
        let ls = oscillator_set(1.0);
        assert_eq!(loop_maslov_index(&ls), 2);
    }

    #[test]
    fn upper_half_arc_maslov_is_one() {
        // (p,q) = (sqrt(2), 0) forward to (-sqrt(2), 0): crosses the right
        // turning point once.
        let ls = oscillator_set(1.0);
        let r = 2.0f64.sqrt();
        let path = ls
            .path_between(PhasePoint::new(r, 0.0), PhasePoint::new(-r, 0.0), Direction::Forward)
            .unwrap();
        assert_eq!(path.crossings().len(), 1);
        let tp = &ls.turning_points()[path.crossings()[0].0];
        assert!((tp.point.q - r).abs() < 1e-8, "crossed tp should be the right one");
        assert_eq!(maslov_index(&path), 1);
        // Same endpoints the long way round: crosses only the left one.
        let back = ls
            .path_between(PhasePoint::new(r, 0.0), PhasePoint::new(-r, 0.0), Direction::Backward)
            .unwrap();
        assert_eq!(back.crossings().len(), 1);
        let tp = &ls.turning_points()[back.crossings()[0].0];
        assert!((tp.point.q + r).abs() < 1e-8);
        assert_eq!(maslov_index(&back), -1);
    }

    #[test]
    fn half_arc_action_is_half_disc() {
        let ls = oscillator_set(1.0);
        let r = 2.0f64.sqrt();
        let path = ls
            .path_between(PhasePoint::new(r, 0.0), PhasePoint::new(-r, 0.0), Direction::Forward)
            .unwrap();
        let act = action_along(&path);
        assert!((act - std::f64::consts::PI).abs() < 1e-10, "half-disc action {act}");
    }

    #[test]
    fn action_is_additive_and_antisymmetric() {
        let ls = oscillator_set(0.7);
        let r = (2.0f64 * 0.7).sqrt();
        let a = PhasePoint::new(r, 0.0);
        let m = ls.project(PhasePoint::new(r / 2.0f64.sqrt(), r / 2.0f64.sqrt())).unwrap();
        let b = PhasePoint::new(-r, 0.0);
        let whole = action_along(&ls.path_between(a, b, Direction::Forward).unwrap());
        let first = action_along(&ls.path_between(a, m, Direction::Forward).unwrap());
        let second = action_along(&ls.path_between(m, b, Direction::Forward).unwrap());
        assert!((whole - first - second).abs() < 1e-9);
        let rev = action_along(&ls.path_between(b, a, Direction::Backward).unwrap());
        assert!((whole + rev).abs() < 1e-9);
    }

    #[test]
    fn cycle_action_matches_shoelace() {
        // The refined action agrees with the raw polyline shoelace up to
        // the polyline's own quadrature error, and with the closed form
        // 2 pi b to full refinement accuracy.
        let ls = oscillator_set(1.3);
        let refined = cycle_action(&ls);
        let mut loop_pts = ls.samples().to_vec();
        loop_pts.push(ls.samples()[0]);
        let shoelace = polyline_action(&loop_pts);
        assert!((refined - shoelace).abs() <= 1e-4 * refined.abs());
        assert!((refined - 2.0 * std::f64::consts::PI * 1.3).abs() < 1e-9);
    }

    #[test]
    fn quartic_p_double_well_has_six_turning_points() {
        // H = p^4/4 - p^2/2 + q^2/2 at b = 1: one loop, tangencies at
        // p = 0 (two, H_pp < 0) and p = +-1 (four, H_pp > 0).
        let h = PolyHamiltonian::new(vec![
            vec![0.0, 0.0, 0.5],
            vec![0.0, 0.0, 0.0],
            vec![-0.5, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![0.25, 0.0, 0.0],
        ])
        .unwrap();
        let p0 = (1.0f64 + 5.0f64.sqrt()).sqrt(); // fiber root at q = 0
        let ls = trace_level_curve(&h, 1.0, PhasePoint::new(p0, 0.0)).unwrap();
        assert_eq!(ls.turning_points().len(), 6);
        assert_eq!(loop_maslov_index(&ls), 2);
        let inner = ls.turning_points().iter().filter(|tp| tp.point.p.abs() < 0.5).count();
        assert_eq!(inner, 2, "two tangencies on the p = 0 ridge");
    }

    #[test]
    fn quartic_fiber_roots_descending() {
        // H = p^4/4 - p^2/2 + q^2/2, b = -0.05, q = 0: four symmetric roots.
        let h = PolyHamiltonian::new(vec![
            vec![0.0, 0.0, 0.5],
            vec![0.0, 0.0, 0.0],
            vec![-0.5, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![0.25, 0.0, 0.0],
        ])
        .unwrap();
        let roots = solve_branches(&h, -0.05, 0.0).unwrap();
        assert_eq!(roots.len(), 4);
        let hi = (1.0f64 + 0.8f64.sqrt()).sqrt();
        let lo = (1.0f64 - 0.8f64.sqrt()).sqrt();
        for (r, e) in roots.iter().zip([hi, lo, -lo, -hi]) {
            assert!((r - e).abs() < 1e-12);
        }
        // At b = +0.05 the inner pair has left the real axis.
        let roots = solve_branches(&h, 0.05, 0.0).unwrap();
        assert_eq!(roots.len(), 2);
        assert!(roots[0] > 0.0 && roots[1] < 0.0);
    }

    #[test]
    fn tangent_fiber_is_rejected() {
        // H = p^2 + q^2 touches b = 0 with a double root at the origin.
        let h = PolyHamiltonian::new(vec![
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        assert!(matches!(solve_branches(&h, 0.0, 0.0), Err(LevelCurveError::NearTangency)));
    }

    #[test]
    fn empty_fiber_is_empty_list() {
        let roots = solve_branches(&shifted_oscillator(0.0), 1.0, 5.0).unwrap();
        assert!(roots.is_empty());
    }

    #[test]
    fn branches_cover_the_loop() {
        let ls = oscillator_set(1.0);
        let branches = ls.branches().unwrap();
        assert_eq!(branches.len(), 2);
        let r = 2.0f64.sqrt();
        for br in &branches {
            assert!((br.q_range.0 + r).abs() < 1e-6);
            assert!((br.q_range.1 - r).abs() < 1e-6);
            for w in br.samples.windows(2) {
                assert!(w[0].q <= w[1].q + 1e-12, "branch must be monotone in q");
            }
        }
        let ids: Vec<usize> = branches.iter().map(|b| b.branch_id).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1]);
    }

    #[test]
    fn branch_momenta_match_fiber_roots() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let ls = oscillator_set(1.0);
        let branches = ls.branches().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = 2.0f64.sqrt();
        for _ in 0..50 {
            let q = rng.gen_range(-0.95 * r..0.95 * r);
            let roots = solve_branches(ls.hamiltonian(), ls.b(), q).unwrap();
            for br in &branches {
                let p = ls.branch_p_at(br, q).unwrap();
                let best = roots.iter().map(|r| (r - p).abs()).fold(f64::INFINITY, f64::min);
                assert!(best < 1e-8, "branch sample off the fiber root set: {best}");
                assert!((roots[br.branch_id] - p).abs() < 1e-8, "branch_id ordering");
            }
        }
    }

    #[test]
    fn noncompact_curve_errors() {
        let h = crate::hamiltonian::momentum();
        let res = trace_level_curve(&h, 0.5, PhasePoint::new(0.5, 0.0));
        assert!(matches!(res, Err(LevelCurveError::NotClosed)));
    }

    #[test]
    fn period_matches_oscillator_and_action_derivative() {
        // Unit-frequency oscillator: T = 2π at every level.
        let ls = oscillator_set(1.0);
        let t = period(&ls);
        assert!((t - 2.0 * std::f64::consts::PI).abs() < 1e-8, "T = {t}");

        // Any Hamiltonian: T = dA/db (centered difference).
        let h = crate::hamiltonian::quartic_well();
        let b = 1.0f64;
        let db = 1e-5;
        let seed = PhasePoint::new((2.0 * b).sqrt(), 0.0);
        let set = trace_level_curve(&h, b, seed).unwrap();
        let lo = trace_level_curve(&h, b - db, seed).unwrap();
        let hi = trace_level_curve(&h, b + db, seed).unwrap();
        let fd = (cycle_action(&hi) - cycle_action(&lo)) / (2.0 * db);
        let t = period(&set);
        assert!((t - fd).abs() < 1e-6 * fd.abs(), "T = {t}, dA/db = {fd}");
    }

    #[test]
    fn csv_export_shape() {
        let ls = oscillator_set(1.0);
        let mut buf = Vec::new();
        ls.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "idx,q,p,is_turning_point");
        let flagged = text.lines().filter(|l| l.ends_with(",1")).count();
        assert_eq!(flagged, 2);
    }
}
