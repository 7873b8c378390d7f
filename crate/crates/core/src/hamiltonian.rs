//! Polynomial Hamiltonians on the phase plane.
//!
//! A Hamiltonian is a real polynomial `H(p, q) = sum_{k,m} c[k][m] p^k q^m`
//! stored as a dense coefficient matrix indexed by momentum degree first.
//! The module provides exact coefficient algebra (partials, products,
//! Poisson brackets); everything downstream (level curves, quantization,
//! overlaps) consumes these primitives.

use serde::Deserialize;
use thiserror::Error;

/// Differentiation variable for [`PolyHamiltonian::partial`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    P,
    Q,
}

#[derive(Debug, Error)]
pub enum HamiltonianError {
    #[error("coefficient rows have unequal lengths (row 0 has {expected}, row {row} has {got})")]
    NonRectangular { row: usize, expected: usize, got: usize },
    #[error("coefficient c[{k}][{m}] is not finite")]
    NonFinite { k: usize, m: usize },
    #[error("empty coefficient matrix")]
    Empty,
    #[error("model is independent of p (degree in p is 0); no fibration over the q-axis")]
    NotMomentumDependent,
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Dense bivariate polynomial `sum c[k][m] p^k q^m`; `coeffs[k][m]` holds
/// the monomial with p-degree `k` and q-degree `m`. Trailing all-zero rows
/// and columns are trimmed on construction, so degrees read off the shape.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyHamiltonian {
    coeffs: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct ModelFile {
    coeffs: Vec<Vec<f64>>,
}

impl PolyHamiltonian {
    pub fn new(coeffs: Vec<Vec<f64>>) -> Result<Self, HamiltonianError> {
        if coeffs.is_empty() || coeffs[0].is_empty() {
            return Err(HamiltonianError::Empty);
        }
        let width = coeffs[0].len();
        for (k, row) in coeffs.iter().enumerate() {
            if row.len() != width {
                return Err(HamiltonianError::NonRectangular {
                    row: k,
                    expected: width,
                    got: row.len(),
                });
            }
            for (m, &c) in row.iter().enumerate() {
                if !c.is_finite() {
                    return Err(HamiltonianError::NonFinite { k, m });
                }
            }
        }
        let mut h = PolyHamiltonian { coeffs };
        h.trim();
        Ok(h)
    }

    /// The zero polynomial, represented as a single zero coefficient.
    pub fn zero() -> Self {
        PolyHamiltonian { coeffs: vec![vec![0.0]] }
    }

    /// Parses `{"coeffs": [[...], ...]}`. Model files must describe a
    /// genuine mechanical system, so a polynomial constant in `p` is
    /// rejected here (the algebraic constructors still allow it).
    pub fn from_model_json(text: &str) -> Result<Self, HamiltonianError> {
        let model: ModelFile = serde_json::from_str(text)?;
        let h = Self::new(model.coeffs)?;
        if h.deg_p() == 0 {
            return Err(HamiltonianError::NotMomentumDependent);
        }
        Ok(h)
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    pub fn deg_p(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn deg_q(&self) -> usize {
        self.coeffs[0].len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0].len() == 1 && self.coeffs[0][0] == 0.0
    }

    /// Swaps the roles of p and q (coefficient-matrix transpose). The level
    /// curves of the result are the mirror images of the originals across
    /// the diagonal, which turns momentum fibrations into position ones.
    pub fn swap_pq(&self) -> Self {
        let rows = self.coeffs[0].len();
        let cols = self.coeffs.len();
        let mut t = vec![vec![0.0; cols]; rows];
        for (k, row) in self.coeffs.iter().enumerate() {
            for (m, &c) in row.iter().enumerate() {
                t[m][k] = c;
            }
        }
        let mut h = PolyHamiltonian { coeffs: t };
        h.trim();
        h
    }

    /// Nested Horner evaluation: each row collapses over q first, then the
    /// row values collapse over p. Keeps the accumulation order fixed so
    /// results are bit-reproducible.
    pub fn eval(&self, p: f64, q: f64) -> f64 {
        let mut acc = 0.0;
        for row in self.coeffs.iter().rev() {
            let mut row_val = 0.0;
            for &c in row.iter().rev() {
                row_val = row_val * q + c;
            }
            acc = acc * p + row_val;
        }
        acc
    }

    /// Coefficient row `k` evaluated at `q`: `c_k(q) = sum_m c[k][m] q^m`.
    pub fn eval_row(&self, k: usize, q: f64) -> f64 {
        let mut row_val = 0.0;
        for &c in self.coeffs[k].iter().rev() {
            row_val = row_val * q + c;
        }
        row_val
    }

    /// Coefficients of the univariate fiber polynomial `p -> H(p, q)`,
    /// lowest degree first.
    pub fn p_poly_at_q(&self, q: f64) -> Vec<f64> {
        (0..self.coeffs.len()).map(|k| self.eval_row(k, q)).collect()
    }

    /// Exact partial derivative; differentiating away the last power of a
    /// variable leaves the zero polynomial (degree 0, coefficient 0).
    pub fn partial(&self, var: Var) -> Self {
        let out = match var {
            Var::P => {
                if self.deg_p() == 0 {
                    return Self::zero();
                }
                self.coeffs[1..]
                    .iter()
                    .enumerate()
                    .map(|(i, row)| row.iter().map(|&c| c * (i + 1) as f64).collect())
                    .collect()
            }
            Var::Q => {
                if self.deg_q() == 0 {
                    return Self::zero();
                }
                self.coeffs
                    .iter()
                    .map(|row| {
                        row[1..]
                            .iter()
                            .enumerate()
                            .map(|(j, &c)| c * (j + 1) as f64)
                            .collect()
                    })
                    .collect()
            }
        };
        let mut h = PolyHamiltonian { coeffs: out };
        h.trim();
        h
    }

    /// Exact product, by coefficient convolution.
    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let rows = self.deg_p() + other.deg_p() + 1;
        let cols = self.deg_q() + other.deg_q() + 1;
        let mut out = vec![vec![0.0; cols]; rows];
        for (ka, row_a) in self.coeffs.iter().enumerate() {
            for (ma, &ca) in row_a.iter().enumerate() {
                if ca == 0.0 {
                    continue;
                }
                for (kb, row_b) in other.coeffs.iter().enumerate() {
                    for (mb, &cb) in row_b.iter().enumerate() {
                        out[ka + kb][ma + mb] += ca * cb;
                    }
                }
            }
        }
        let mut h = PolyHamiltonian { coeffs: out };
        h.trim();
        h
    }

    /// Exact difference of coefficient matrices.
    pub fn sub(&self, other: &Self) -> Self {
        let rows = self.coeffs.len().max(other.coeffs.len());
        let cols = self.coeffs[0].len().max(other.coeffs[0].len());
        let mut out = vec![vec![0.0; cols]; rows];
        for (k, row) in self.coeffs.iter().enumerate() {
            for (m, &c) in row.iter().enumerate() {
                out[k][m] += c;
            }
        }
        for (k, row) in other.coeffs.iter().enumerate() {
            for (m, &c) in row.iter().enumerate() {
                out[k][m] -= c;
            }
        }
        let mut h = PolyHamiltonian { coeffs: out };
        h.trim();
        h
    }

    /// Poisson bracket `{A, B} = dA/dp dB/dq - dA/dq dB/dp`, exact on
    /// coefficients.
    pub fn poisson_bracket(&self, other: &Self) -> Self {
        let a_p = self.partial(Var::P);
        let a_q = self.partial(Var::Q);
        let b_p = other.partial(Var::P);
        let b_q = other.partial(Var::Q);
        a_p.mul(&b_q).sub(&a_q.mul(&b_p))
    }

    fn trim(&mut self) {
        while self.coeffs.len() > 1
            && self.coeffs.last().map_or(false, |r| r.iter().all(|&c| c == 0.0))
        {
            self.coeffs.pop();
        }
        let mut width = self.coeffs[0].len();
        while width > 1 && self.coeffs.iter().all(|r| r[width - 1] == 0.0) {
            width -= 1;
        }
        for row in &mut self.coeffs {
            row.truncate(width);
        }
    }
}

/// `p^2/2 + (q - shift)^2/2`, the translated oscillator family used all
/// over the test suite.
pub fn shifted_oscillator(shift: f64) -> PolyHamiltonian {
    PolyHamiltonian::new(vec![
        vec![shift * shift / 2.0, -shift, 0.5],
        vec![0.0, 0.0, 0.0],
        vec![0.5, 0.0, 0.0],
    ])
    .expect("static coefficients")
}

/// `p^2/2 + q^4`, the anharmonic benchmark well.
pub fn quartic_well() -> PolyHamiltonian {
    PolyHamiltonian::new(vec![
        vec![0.0, 0.0, 0.0, 0.0, 1.0],
        vec![0.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.5, 0.0, 0.0, 0.0, 0.0],
    ])
    .expect("static coefficients")
}

/// The free momentum Hamiltonian `H = p`.
pub fn momentum() -> PolyHamiltonian {
    PolyHamiltonian::new(vec![vec![0.0], vec![1.0]]).expect("static coefficients")
}
