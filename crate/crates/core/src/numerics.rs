//! Small numerical primitives shared by the geometry modules: real roots
//! of univariate polynomials (recursive critical-point isolation plus
//! Newton polish) and a safeguarded bracketed root finder.

/// Real roots of `sum_k coeffs[k] x^k` (lowest degree first), sorted
/// descending. Roots are isolated between critical points, so genuine
/// double roots (tangencies) appear as coincident pairs rather than being
/// merged. `complex_pair_gap` estimates the distance from the real axis
/// of the nearest complex-conjugate pair, so callers can detect fibers
/// that sit just past a tangency.
#[derive(Clone, Debug)]
pub struct PolyRoots {
    pub real: Vec<f64>,
    pub complex_pair_gap: f64,
    /// All coefficients vanished: the polynomial is identically zero.
    pub degenerate: bool,
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

fn poly_deriv(coeffs: &[f64]) -> Vec<f64> {
    coeffs.iter().enumerate().skip(1).map(|(k, &c)| c * k as f64).collect()
}

/// Magnitude scale of the polynomial at `x`, for residual acceptance.
fn poly_scale(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0f64;
    let mut xp = 1.0f64;
    for &c in coeffs {
        acc += c.abs() * xp.abs();
        xp *= x;
    }
    acc.max(1e-300)
}

/// Cauchy root bound: all roots lie in `[-r, r]`.
fn cauchy_bound(coeffs: &[f64]) -> f64 {
    let lead = coeffs[coeffs.len() - 1].abs();
    let m = coeffs[..coeffs.len() - 1].iter().fold(0.0f64, |a, c| a.max(c.abs()));
    1.0 + m / lead
}

/// Newton polish from a bracketed starting point; falls back to the
/// bisection value when Newton wanders.
fn polish_root(coeffs: &[f64], deriv: &[f64], mut x: f64, lo: f64, hi: f64) -> f64 {
    for _ in 0..60 {
        let f = poly_eval(coeffs, x);
        let d = poly_eval(deriv, x);
        if d == 0.0 {
            break;
        }
        let step = f / d;
        let next = x - step;
        if next < lo || next > hi {
            break;
        }
        x = next;
        if step.abs() <= 1e-16 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// Roots of a monotone stretch `[lo, hi]` with a sign change, by
/// bisection followed by Newton polish.
fn bracketed_root(coeffs: &[f64], deriv: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = poly_eval(coeffs, lo);
    if flo == 0.0 {
        return lo;
    }
    if poly_eval(coeffs, hi) == 0.0 {
        return hi;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = poly_eval(coeffs, mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    polish_root(coeffs, deriv, 0.5 * (lo + hi), lo, hi)
}

/// Recursive isolation: between consecutive critical points (and across
/// the Cauchy bound) the polynomial is monotone, so each sign change
/// holds exactly one root. Touching roots at critical points are emitted
/// twice.
fn isolate_real_roots(coeffs: &[f64], collect_gap: Option<&mut f64>) -> Vec<f64> {
    if coeffs.len() <= 1 {
        return Vec::new();
    }
    let deg = coeffs.len() - 1;
    if deg == 1 {
        return vec![-coeffs[0] / coeffs[1]];
    }

    let deriv = poly_deriv(coeffs);
    let mut crit = isolate_real_roots(&trim_leading(&deriv), None);
    crit.sort_by(|a, b| a.partial_cmp(b).unwrap());
    crit.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + a.abs()));

    let bound = cauchy_bound(coeffs);
    let mut nodes = Vec::with_capacity(crit.len() + 2);
    nodes.push(-bound - 1.0);
    nodes.extend(crit.iter().copied().filter(|c| c.abs() <= bound + 1.0));
    nodes.push(bound + 1.0);

    let mut roots = Vec::new();
    let mut gap = f64::INFINITY;
    let second = poly_deriv(&deriv);
    let values: Vec<f64> = nodes.iter().map(|&x| poly_eval(coeffs, x)).collect();
    let touch_tol: Vec<f64> =
        nodes.iter().map(|&x| 1e-13 * poly_scale(coeffs, x)).collect();

    for i in 0..nodes.len() {
        let interior = i > 0 && i + 1 < nodes.len();
        if interior && values[i].abs() <= touch_tol[i] {
            // Tangency: the curve touches zero at a critical point.
            roots.push(nodes[i]);
            roots.push(nodes[i]);
            continue;
        }
        if interior {
            // Distance estimate of the complex pair hovering near this
            // local extremum: |p| ~ (1/2)|p''| delta^2.
            let d2 = poly_eval(&second, nodes[i]);
            if d2.abs() > 0.0 {
                let est = (2.0 * values[i].abs() / d2.abs()).sqrt();
                gap = gap.min(est);
            }
        }
        if i + 1 < nodes.len() {
            let (a, b) = (values[i], values[i + 1]);
            let touching =
                a.abs() <= touch_tol[i] || b.abs() <= touch_tol[i + 1];
            if !touching && a * b < 0.0 {
                roots.push(bracketed_root(coeffs, &deriv, nodes[i], nodes[i + 1]));
            }
        }
    }
    if let Some(slot) = collect_gap {
        *slot = (*slot).min(gap);
    }
    roots
}

fn trim_leading(coeffs: &[f64]) -> Vec<f64> {
    let max_c = coeffs.iter().fold(0.0f64, |a, &c| a.max(c.abs())).max(1e-300);
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg].abs() <= 1e-14 * max_c {
        deg -= 1;
    }
    coeffs[..=deg].to_vec()
}

pub fn real_poly_roots(coeffs: &[f64]) -> PolyRoots {
    let max_c = coeffs.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    if max_c == 0.0 {
        return PolyRoots { real: Vec::new(), complex_pair_gap: f64::INFINITY, degenerate: true };
    }
    let work = trim_leading(coeffs);
    if work.len() == 1 {
        return PolyRoots { real: Vec::new(), complex_pair_gap: f64::INFINITY, degenerate: false };
    }
    let mut gap = f64::INFINITY;
    let mut real = isolate_real_roots(&work, Some(&mut gap));
    real.sort_by(|a, b| b.partial_cmp(a).unwrap());
    PolyRoots { real, complex_pair_gap: gap, degenerate: false }
}
