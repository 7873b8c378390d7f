//! Exact Wigner 6j recoupling coefficients and their semiclassics.
//!
//! Spins are stored doubled (`tj = 2j`), so half-integers stay exact. The
//! symbol `{a b c; d e f}` couples the four triads `(a,b,c)`, `(a,e,f)`,
//! `(d,b,f)`, `(d,e,c)`; the exact value is computed by the Racah
//! single-sum formula in big-rational arithmetic and carried as
//! `sign * sqrt(radicand)` with an exactly rational radicand.
//!
//! Semiclassically, the six lengths `L_i = j_i + 1/2` form a tetrahedron
//! whose edge `AB` is the recoupled spin `c`, `CD` its partner `f`, and
//! the remaining four spins the side edges; each triad is a face. When
//! the Cayley-Menger determinant is positive the Ponzano-Regge
//! approximation applies:
//!
//! ```text
//! {6j} ~ cos( sum_i L_i theta_i^ext + pi/4 ) / sqrt(12 pi V),
//! ```
//!
//! with `theta_i^ext = pi - theta_i` the exterior dihedral angle at edge
//! `i` and `V` the Euclidean volume.

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

type BigRat = Ratio<BigInt>;

#[derive(Debug, Error)]
pub enum SixJError {
    #[error("triad {triad:?} has odd doubled sum; spins do not couple to integers")]
    BadParity { triad: [u32; 3] },
    #[error("edge lengths do not embed as a Euclidean tetrahedron (scaled CM determinant {cm_norm:e})")]
    NotRealizable { cm_norm: f64 },
}

/// Six doubled spins in the arrangement `{a b c; d e f}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SixJInput {
    pub tj: [u32; 6],
}

/// The four coupled triads, as index triples into `tj`.
const TRIADS: [[usize; 3]; 4] = [[0, 1, 2], [0, 4, 5], [3, 1, 5], [3, 4, 2]];

impl SixJInput {
    /// Validates that every triad has an even doubled sum (integer total
    /// spin). Triangle inequalities are *not* required: the symbol is
    /// exactly zero when they fail.
    pub fn new(tj: [u32; 6]) -> Result<Self, SixJError> {
        for t in TRIADS {
            if (tj[t[0]] + tj[t[1]] + tj[t[2]]) % 2 != 0 {
                return Err(SixJError::BadParity {
                    triad: [tj[t[0]], tj[t[1]], tj[t[2]]],
                });
            }
        }
        Ok(SixJInput { tj })
    }

    /// Semiclassical edge lengths `L_i = j_i + 1/2`.
    pub fn lengths(&self) -> [f64; 6] {
        let mut l = [0.0; 6];
        for (slot, &t) in l.iter_mut().zip(&self.tj) {
            *slot = (t as f64 + 1.0) / 2.0;
        }
        l
    }

    /// Uniform semiclassical rescaling `j -> lambda j + (lambda-1)/2`,
    /// which scales every length `L_i` exactly by `lambda`.
    pub fn scaled(&self, lambda: u32) -> SixJInput {
        let mut tj = [0u32; 6];
        for (slot, &t) in tj.iter_mut().zip(&self.tj) {
            *slot = lambda * (t + 1) - 1;
        }
        SixJInput { tj }
    }

    fn triangle_ok(&self) -> bool {
        TRIADS.iter().all(|t| {
            let (x, y, z) =
                (self.tj[t[0]] as i64, self.tj[t[1]] as i64, self.tj[t[2]] as i64);
            z <= x + y && z >= (x - y).abs()
        })
    }
}

/// Exact value `sign * sqrt(radicand)` with `radicand` rational.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SixJ {
    pub sign: i8,
    pub radicand: BigRat,
}

impl SixJ {
    pub fn zero() -> Self {
        SixJ { sign: 0, radicand: BigRat::zero() }
    }

    pub fn to_f64(&self) -> f64 {
        self.sign as f64 * ratio_to_f64(&self.radicand).sqrt()
    }
}

/// Round-to-nearest conversion that survives numerators and denominators
/// far beyond the f64 exponent range: shift the quotient up to ~64
/// significant bits, convert, and scale back.
fn ratio_to_f64(r: &BigRat) -> f64 {
    if r.numer().is_zero() {
        return 0.0;
    }
    let neg = r.numer().is_negative() != r.denom().is_negative();
    let num = r.numer().abs();
    let den = r.denom().abs();
    let shift = (64i64 + den.bits() as i64 - num.bits() as i64).max(0) as u64;
    let q = (num << shift) / den;
    let qf = q.to_f64().unwrap_or(f64::INFINITY);
    let mag = qf * 2.0f64.powi(-(shift as i32));
    if neg {
        -mag
    } else {
        mag
    }
}

fn factorials(n: usize) -> Vec<BigInt> {
    let mut f = Vec::with_capacity(n + 1);
    f.push(BigInt::one());
    for k in 1..=n {
        let prev = f[k - 1].clone();
        f.push(prev * BigInt::from(k));
    }
    f
}

/// `Delta(x, y, z)` for doubled spins: the triangle coefficient
/// `(x+y-z)! (x-y+z)! (-x+y+z)! / (x+y+z+1)!`.
fn triangle_delta(f: &[BigInt], dx: i64, dy: i64, dz: i64) -> BigRat {
    let s1 = ((dx + dy - dz) / 2) as usize;
    let s2 = ((dx - dy + dz) / 2) as usize;
    let s3 = ((-dx + dy + dz) / 2) as usize;
    let tot = ((dx + dy + dz) / 2 + 1) as usize;
    BigRat::new(f[s1].clone() * &f[s2] * &f[s3], f[tot].clone())
}

/// Exact 6j symbol by the Racah single-sum formula. Inputs violating a
/// triangle inequality give an exact zero.
pub fn racah_6j(input: &SixJInput) -> SixJ {
    if !input.triangle_ok() {
        return SixJ::zero();
    }
    let d: Vec<i64> = input.tj.iter().map(|&t| t as i64).collect();
    let (a, b, c, dd, e, ff) = (d[0], d[1], d[2], d[3], d[4], d[5]);

    // Triad sums and opposite-pair sums, in undoubled integer units.
    let t1 = (a + b + c) / 2;
    let t2 = (a + e + ff) / 2;
    let t3 = (dd + b + ff) / 2;
    let t4 = (dd + e + c) / 2;
    let q1 = (a + b + dd + e) / 2;
    let q2 = (b + c + e + ff) / 2;
    let q3 = (a + c + dd + ff) / 2;

    let t_min = t1.max(t2).max(t3).max(t4);
    let t_max = q1.min(q2).min(q3);
    let f = factorials((t_max + 1).max(t1 + 1) as usize + 1);

    let mut sum = BigRat::zero();
    for t in t_min..=t_max {
        let num = f[(t + 1) as usize].clone();
        let mut den = f[(t - t1) as usize].clone();
        den *= &f[(t - t2) as usize];
        den *= &f[(t - t3) as usize];
        den *= &f[(t - t4) as usize];
        den *= &f[(q1 - t) as usize];
        den *= &f[(q2 - t) as usize];
        den *= &f[(q3 - t) as usize];
        let term = BigRat::new(num, den);
        if t % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }

    let delta = triangle_delta(&f, a, b, c)
        * triangle_delta(&f, a, e, ff)
        * triangle_delta(&f, dd, b, ff)
        * triangle_delta(&f, dd, e, c);

    let sign = if sum.is_zero() {
        0
    } else if sum.numer().is_negative() {
        -1
    } else {
        1
    };
    SixJ { sign, radicand: &sum * &sum * delta }
}

/// Euclidean tetrahedron data for six edge lengths in the input order
/// `[a, b, c, d, e, f]`: `AB = c`, `AC = a`, `BC = b`, `AD = e`,
/// `BD = d`, `CD = f`, so each coupled triad is a face.
#[derive(Clone, Copy, Debug)]
pub struct Tetrahedron {
    pub lengths: [f64; 6],
    pub volume: f64,
    /// Interior dihedral angle at each edge, input order.
    pub dihedral: [f64; 6],
    /// Scaled Cayley-Menger determinant (positive for nondegenerate
    /// Euclidean embeddings).
    pub cm_norm: f64,
}

/// Cayley-Menger determinant of the six lengths; `V^2 = det / 288`.
fn cayley_menger(l: &[f64; 6]) -> f64 {
    // Squared distances by vertex pair from the edge assignment.
    let (ab, ac, bc, ad, bd, cd) = (l[2], l[0], l[1], l[4], l[3], l[5]);
    let d2 = [
        [0.0, ab * ab, ac * ac, ad * ad],
        [ab * ab, 0.0, bc * bc, bd * bd],
        [ac * ac, bc * bc, 0.0, cd * cd],
        [ad * ad, bd * bd, cd * cd, 0.0],
    ];
    let mut m = nalgebra::DMatrix::zeros(5, 5);
    for i in 1..5 {
        m[(0, i)] = 1.0;
        m[(i, 0)] = 1.0;
    }
    for i in 0..4 {
        for j in 0..4 {
            m[(i + 1, j + 1)] = d2[i][j];
        }
    }
    m.determinant()
}

/// Embeds six lengths as a Euclidean tetrahedron and measures its volume
/// and interior dihedral angles.
pub fn tetrahedron_from_lengths(lengths: [f64; 6]) -> Result<Tetrahedron, SixJError> {
    let rms = (lengths.iter().map(|l| l * l).sum::<f64>() / 6.0).sqrt();
    let cm = cayley_menger(&lengths);
    // The determinant is homogeneous of degree 6 in the lengths, so this
    // ratio is invariant under pure rescaling of the tetrahedron.
    let cm_norm = cm / rms.powi(6);
    if !(cm_norm > 1e-12) {
        return Err(SixJError::NotRealizable { cm_norm });
    }
    let (ab, ac, bc, ad, bd, cd) =
        (lengths[2], lengths[0], lengths[1], lengths[4], lengths[3], lengths[5]);
    // Coordinates: A at the origin, B on the x-axis, C in the xy-plane,
    // D above it.
    let xc = (ab * ab + ac * ac - bc * bc) / (2.0 * ab);
    let yc2 = ac * ac - xc * xc;
    if !(yc2 > 0.0) {
        return Err(SixJError::NotRealizable { cm_norm });
    }
    let yc = yc2.sqrt();
    let xd = (ab * ab + ad * ad - bd * bd) / (2.0 * ab);
    let yd = (ad * ad - cd * cd + xc * xc + yc * yc - 2.0 * xd * xc) / (2.0 * yc);
    let zd2 = ad * ad - xd * xd - yd * yd;
    if !(zd2 > 0.0) {
        return Err(SixJError::NotRealizable { cm_norm });
    }
    let zd = zd2.sqrt();

    let a = [0.0, 0.0, 0.0];
    let b = [ab, 0.0, 0.0];
    let c = [xc, yc, 0.0];
    let d = [xd, yd, zd];
    let volume = ab * yc * zd / 6.0;

    // Interior dihedral at edge (p, q) with opposite vertices (r, s):
    // the angle between r and s seen perpendicular to the edge.
    let dihedral_at = |p: [f64; 3], q: [f64; 3], r: [f64; 3], s: [f64; 3]| -> f64 {
        let u = sub(q, p);
        let un = norm(u);
        let u = [u[0] / un, u[1] / un, u[2] / un];
        let rp = sub(r, p);
        let sp = sub(s, p);
        let rperp = sub(rp, scale(u, dot(rp, u)));
        let sperp = sub(sp, scale(u, dot(sp, u)));
        let cosv = dot(rperp, sperp) / (norm(rperp) * norm(sperp));
        cosv.clamp(-1.0, 1.0).acos()
    };

    // Input order [a b c d e f] -> edges [AC, BC, AB, BD, AD, CD].
    let dihedral = [
        dihedral_at(a, c, b, d),
        dihedral_at(b, c, a, d),
        dihedral_at(a, b, c, d),
        dihedral_at(b, d, a, c),
        dihedral_at(a, d, b, c),
        dihedral_at(c, d, a, b),
    ];

    Ok(Tetrahedron { lengths, volume, dihedral, cm_norm })
}

fn sub(x: [f64; 3], y: [f64; 3]) -> [f64; 3] {
    [x[0] - y[0], x[1] - y[1], x[2] - y[2]]
}

fn dot(x: [f64; 3], y: [f64; 3]) -> f64 {
    x[0] * y[0] + x[1] * y[1] + x[2] * y[2]
}

fn scale(x: [f64; 3], s: f64) -> [f64; 3] {
    [x[0] * s, x[1] * s, x[2] * s]
}

fn norm(x: [f64; 3]) -> f64 {
    dot(x, x).sqrt()
}

pub fn tetrahedron_geometry(input: &SixJInput) -> Result<Tetrahedron, SixJError> {
    tetrahedron_from_lengths(input.lengths())
}

/// Ponzano-Regge asymptotic value of the 6j symbol.
pub fn ponzano_regge(input: &SixJInput) -> Result<f64, SixJError> {
    let t = tetrahedron_geometry(input)?;
    let mut phase = std::f64::consts::FRAC_PI_4;
    for i in 0..6 {
        phase += t.lengths[i] * (std::f64::consts::PI - t.dihedral[i]);
    }
    Ok(phase.cos() / (12.0 * std::f64::consts::PI * t.volume).sqrt())
}

/// Interior cut for convergence statistics: cells whose normalized
/// Cayley-Menger determinant falls below this are near the caustic
/// boundary layer, where the oscillatory asymptotic is not expected to
/// hold (the error there shrinks slower than the bulk 1/lambda rate and
/// would otherwise dominate the RMS). The equilateral configuration has
/// norm 4.0, so this keeps cells above a quarter of the peak.
pub const CM_NORM_INTERIOR: f64 = 1.0;

/// One row of a semiclassical convergence study at a single scale:
/// RMS statistics of exact vs Ponzano-Regge values over the admissible
/// `j12` window, restricted to classically-allowed interior cells.
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceRow {
    pub lambda: u32,
    pub cells: usize,
    pub rms_exact: f64,
    pub rms_err: f64,
    /// `rms_err / rms_exact`.
    pub ratio: f64,
}

/// One evaluated cell of the study, for table emission.
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceCell {
    pub lambda: u32,
    /// Doubled `j12` of the cell.
    pub tj12: u32,
    pub exact: f64,
    pub pr: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub cells: Vec<ConvergenceCell>,
}

/// Multiplies all six angular momenta of `base` by each `lambda` and
/// sweeps `j12` (third slot) across its full admissible window at that
/// scale, comparing the exact symbol with its Ponzano-Regge value on
/// every realizable interior cell (normalized Cayley-Menger determinant
/// at least [`CM_NORM_INTERIOR`]).
pub fn convergence_study(
    base: &SixJInput,
    lambdas: &[u32],
) -> Result<ConvergenceStudy, SixJError> {
    let mut study = ConvergenceStudy::default();
    for &lambda in lambdas {
        let tj: Vec<u32> = base.tj.iter().map(|&t| t * lambda).collect();
        let lo = tj[0].abs_diff(tj[1]).max(tj[3].abs_diff(tj[4]));
        let hi = (tj[0] + tj[1]).min(tj[3] + tj[4]);
        // Triad parity fixes j12's parity class within the window.
        let lo = if (lo + tj[0] + tj[1]) % 2 == 0 { lo } else { lo + 1 };
        let mut sq_err = 0.0;
        let mut sq_exact = 0.0;
        let mut cells = 0usize;
        let mut x = lo;
        while x <= hi {
            let input = SixJInput::new([tj[0], tj[1], x, tj[3], tj[4], tj[5]])?;
            if let Ok(geo) = tetrahedron_geometry(&input) {
                if geo.cm_norm >= CM_NORM_INTERIOR {
                    let exact = racah_6j(&input).to_f64();
                    let pr = ponzano_regge(&input)?;
                    sq_err += (exact - pr) * (exact - pr);
                    sq_exact += exact * exact;
                    cells += 1;
                    study.cells.push(ConvergenceCell { lambda, tj12: x, exact, pr });
                }
            }
            x += 2;
        }
        if cells == 0 {
            return Err(SixJError::NotRealizable { cm_norm: 0.0 });
        }
        let rms_err = (sq_err / cells as f64).sqrt();
        let rms_exact = (sq_exact / cells as f64).sqrt();
        study.rows.push(ConvergenceRow {
            lambda,
            cells,
            rms_exact,
            rms_err,
            ratio: rms_err / rms_exact,
        });
    }
    Ok(study)
}
