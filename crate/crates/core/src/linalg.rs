//! Small dense/banded linear-algebra kernels used across the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric matrix with bandwidth two, stored by diagonals.
///
/// `off1[i] = K[i][i+1]`, `off2[i] = K[i][i+2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymBand {
    pub diag: Vec<f64>,
    pub off1: Vec<f64>,
    pub off2: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize) -> Self {
        SymBand {
            diag: vec![0.0; n],
            off1: vec![0.0; n.saturating_sub(1)],
            off2: vec![0.0; n.saturating_sub(2)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Adds the Hessian of `w/2 (u[p] - u[q])^2`.
    pub fn add_pair(&mut self, p: usize, q: usize, w: f64) {
        let (lo, hi) = if p < q { (p, q) } else { (q, p) };
        self.diag[lo] += w;
        self.diag[hi] += w;
        match hi - lo {
            1 => self.off1[lo] -= w,
            2 => self.off2[lo] -= w,
            d => panic!("coupling distance {d} exceeds bandwidth"),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        match hi - lo {
            0 => self.diag[lo],
            1 => self.off1[lo],
            2 => self.off2[lo],
            _ => 0.0,
        }
    }

    /// `out = K u`.
    pub fn mul_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(u.len(), n);
        for i in 0..n {
            let mut s = self.diag[i] * u[i];
            if i + 1 < n {
                s += self.off1[i] * u[i + 1];
            }
            if i >= 1 {
                s += self.off1[i - 1] * u[i - 1];
            }
            if i + 2 < n {
                s += self.off2[i] * u[i + 2];
            }
            if i >= 2 {
                s += self.off2[i - 2] * u[i - 2];
            }
            out[i] = s;
        }
    }

    pub fn mul(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.mul_into(u, &mut out);
        out
    }

    /// `u^T K v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mul(v).iter().zip(u).map(|(a, b)| a * b).sum()
    }

    /// Drops the first row and column.
    pub fn without_first(&self) -> Self {
        SymBand {
            diag: self.diag[1..].to_vec(),
            off1: self.off1.get(1..).map(<[f64]>::to_vec).unwrap_or_default(),
            off2: self.off2.get(1..).map(<[f64]>::to_vec).unwrap_or_default(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// Nonzero upper-triangle entries as `(row, col, value)`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for i in 0..self.dim() {
            for j in i..(i + 3).min(self.dim()) {
                t.push((i, j, self.get(i, j)));
            }
        }
        t
    }
}

/// Solves a tridiagonal system with the Thomas algorithm.
///
/// `lower[i]` multiplies `x[i-1]` in row `i` (so `lower[0]` is unused) and
/// `upper[i]` multiplies `x[i+1]`.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv.abs() < f64::MIN_POSITIVE {
        return Err(Error::NotPositiveDefinite("zero pivot in tridiagonal solve".into()));
    }
    c[0] = upper[0] / piv;
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * c[i - 1];
        if piv.abs() < f64::MIN_POSITIVE {
            return Err(Error::NotPositiveDefinite("zero pivot in tridiagonal solve".into()));
        }
        c[i] = if i + 1 < n { upper[i] / piv } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Eigenvalues of the symmetric-definite pencil `A x = lambda B x`, ascending.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("pencil right-hand matrix".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let mut m = &linv * a * linv.transpose();
    m = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

pub fn quad_form(m: &DMatrix<f64>, z: &DVector<f64>) -> f64 {
    z.dot(&(m * z))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
