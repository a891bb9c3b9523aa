//! Dense and banded linear-algebra primitives.
//!
//! Nothing here is novel: LU with partial pivoting for the shifted inverse
//! iterations, the Thomas algorithm for tridiagonal systems, and a
//! Householder tridiagonalisation followed by Sturm-sequence bisection.
//! The last pair forms the *direct* eigenvalue route used to cross-check the
//! iterative solvers, so it deliberately shares no code with them.

use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular to working precision (pivot {0:.3e} at step {1})")]
    Singular(f64, usize),
    #[error("matrix is not positive definite (leading minor {0})")]
    NotPositiveDefinite(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// LU factorisation with partial pivoting, stored in-place.
pub struct LuFactors {
    lu: Array2<f64>,
    perm: Vec<usize>,
}

pub fn lu_factor(a: &Array2<f64>) -> Result<LuFactors, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::Dimension(format!(
            "lu_factor needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut piv = k;
        let mut max = lu[[k, k]].abs();
        for i in k + 1..n {
            let v = lu[[i, k]].abs();
            if v > max {
                max = v;
                piv = i;
            }
        }
        if max == 0.0 || !max.is_finite() {
            return Err(LinalgError::Singular(max, k));
        }
        if piv != k {
            perm.swap(piv, k);
            for j in 0..n {
                let tmp = lu[[k, j]];
                lu[[k, j]] = lu[[piv, j]];
                lu[[piv, j]] = tmp;
            }
        }
        let pivot = lu[[k, k]];
        // Split rows below the pivot row to keep the borrow checker happy
        // while updating the trailing block row by row.
        let (upper, mut lower) = lu.view_mut().split_at(ndarray::Axis(0), k + 1);
        let pivot_row = upper.row(k);
        for mut row in lower.rows_mut() {
            let m = row[k] / pivot;
            row[k] = m;
            if m != 0.0 {
                for j in k + 1..n {
                    row[j] -= m * pivot_row[j];
                }
            }
        }
    }
    Ok(LuFactors { lu, perm })
}

impl LuFactors {
    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.lu.nrows();
        assert_eq!(b.len(), n, "rhs length mismatch");
        let mut x = Array1::zeros(n);
        for i in 0..n {
            x[i] = b[self.perm[i]];
        }
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[[i, j]] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[[i, j]] * x[j];
            }
            x[i] = acc / self.lu[[i, i]];
        }
        x
    }
}

/// Thomas algorithm for a tridiagonal system given by `(sub, diag, sup)`.
/// `sub[0]` and `sup[n-1]` are ignored.
pub fn tridiag_solve(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>, LinalgError> {
    let n = diag.len();
    if sub.len() != n || sup.len() != n || rhs.len() != n {
        return Err(LinalgError::Dimension(
            "tridiag_solve bands and rhs must share the diagonal length".into(),
        ));
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(LinalgError::Singular(0.0, 0));
    }
    c[0] = sup[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - sub[i] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(LinalgError::Singular(denom, i));
        }
        c[i] = sup[i] / denom;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    Ok(x)
}

/// Cholesky factor (lower triangle) of a small dense SPD matrix.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::Dimension("cholesky needs a square matrix".into()));
    }
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if acc <= 0.0 || !acc.is_finite() {
                    return Err(LinalgError::NotPositiveDefinite(i));
                }
                l[[i, i]] = acc.sqrt();
            } else {
                l[[i, j]] = acc / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Symmetric tridiagonal matrix `(diag, off)` with `off[i]` coupling nodes
/// `i` and `i+1`.
#[derive(Debug, Clone)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

/// Householder reduction of a dense symmetric matrix to tridiagonal form.
/// Only the eigenvalue data is kept; accumulating transforms is not needed
/// for the oracle role this plays.
pub fn householder_tridiagonalize(a: &Array2<f64>) -> Result<SymTridiag, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::Dimension(
            "householder_tridiagonalize needs a square matrix".into(),
        ));
    }
    let mut m = a.clone();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        // Householder vector annihilating column k below row k+1.
        let mut norm2 = 0.0;
        for i in k + 1..n {
            let x = m[[i, k]];
            v[i] = x;
            norm2 += x * x;
        }
        let alpha = norm2.sqrt();
        diag[k] = m[[k, k]];
        if alpha == 0.0 {
            off[k] = 0.0;
            continue;
        }
        let x0 = v[k + 1];
        let beta = if x0 >= 0.0 { -alpha } else { alpha };
        off[k] = beta;
        v[k + 1] = x0 - beta;
        let sigma = v[k + 1..n].iter().map(|t| t * t).sum::<f64>();
        if sigma == 0.0 {
            continue;
        }
        // p = A v restricted to the trailing block, exploiting symmetry.
        for i in k + 1..n {
            let mut acc = 0.0;
            for j in k + 1..n {
                acc += m[[i, j]] * v[j];
            }
            p[i] = acc;
        }
        let scale = 2.0 / sigma;
        let vp: f64 = (k + 1..n).map(|i| v[i] * p[i]).sum();
        // w = scale * (p - scale/2 * (v'p) v); A <- A - v w' - w v'.
        for i in k + 1..n {
            p[i] = scale * (p[i] - 0.5 * scale * vp * v[i]);
        }
        for i in k + 1..n {
            let vi = v[i];
            let wi = p[i];
            for j in k + 1..=i {
                m[[i, j]] -= vi * p[j] + wi * v[j];
                m[[j, i]] = m[[i, j]];
            }
        }
    }
    if n >= 2 {
        diag[n - 2] = m[[n - 2, n - 2]];
        off[n - 2] = m[[n - 1, n - 2]];
    }
    diag[n - 1] = m[[n - 1, n - 1]];
    Ok(SymTridiag { diag, off })
}

impl SymTridiag {
    /// Number of eigenvalues strictly below `x`, from the Sturm sequence of
    /// the shifted LDL' recurrence.
    pub fn count_below(&self, x: f64) -> usize {
        let n = self.diag.len();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let b2 = self.off[i - 1] * self.off[i - 1];
            let denom = if q == 0.0 { 1e-300 } else { q };
            q = self.diag[i] - x - b2 / denom;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// k-th smallest eigenvalue (0-based) by bisection on the Sturm count.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let n = self.diag.len();
        assert!(k < n, "eigenvalue index out of range");
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs()).max(1.0);
        while hi - lo > 1e-15 * scale {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn smallest_eigenvalue(&self) -> f64 {
        self.eigenvalue(0)
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        self.eigenvalue(self.diag.len() - 1)
    }
}

/// Smallest eigenvalue of a dense symmetric matrix by Householder
/// tridiagonalisation plus Sturm bisection.
pub fn dense_symmetric_smallest_eigenvalue(a: &Array2<f64>) -> Result<f64, LinalgError> {
    Ok(householder_tridiagonalize(a)?.smallest_eigenvalue())
}

/// Largest eigenvalue of a dense symmetric matrix, same route.
pub fn dense_symmetric_largest_eigenvalue(a: &Array2<f64>) -> Result<f64, LinalgError> {
    Ok(householder_tridiagonalize(a)?.largest_eigenvalue())
}
