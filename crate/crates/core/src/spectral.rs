//! Principal eigenvalues of the nonlocal Dirichlet operator
//! `A φ = -d φ'' - c1(x) P[φ] + c2(x) φ` and the derived thresholds.
//!
//! The operator decides everything qualitative in the models: a steady state
//! exists iff certain `λ₁ < 0`, spreading of the free boundary is governed
//! by the ratio `r02`, and the critical domain length is the zero crossing
//! of `λ₁` as a function of interval length.
//!
//! Two independent routes are kept deliberately separate:
//! * the production path: shifted inverse power iteration, started with a
//!   shift strictly below the spectrum so the iteration matrix is
//!   entrywise nonnegative and converges to the Perron pair, then
//!   re-shifted at the current Rayleigh estimate every few iterations;
//! * the oracle path: dense Householder tridiagonalisation plus Sturm
//!   bisection (symmetric problems only), used by tests and available as
//!   [`dense_lambda1`] for grids up to [`DENSE_ORACLE_MAX_NODES`] nodes.

use crate::grid::Grid1D;
use crate::kernel::{build_kernel, KernelError, KernelMatrix, KernelSpec, Normalization};
use crate::linalg::{self, lu_factor, LinalgError};
use ndarray::{Array1, Array2};
use serde::Serialize;
use thiserror::Error;

/// Residual tolerance for the iterative eigensolvers.
pub const EIGEN_TOL: f64 = 1e-10;
/// Iteration cap for the eigensolvers.
pub const EIGEN_MAX_ITER: usize = 10_000;
/// Largest grid the dense oracle accepts.
pub const DENSE_ORACLE_MAX_NODES: usize = 2001;
/// Inverse iterations between shift refreshes.
const REFRESH_EVERY: usize = 5;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("eigensolver did not reach residual {tol:.1e} in {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { tol: f64, iterations: usize, residual: f64 },
    #[error("computed eigenfunction is not positive (min/max = {min_over_max:.3e}); not the principal pair")]
    NonPositiveEigenfunction { min_over_max: f64 },
    #[error("threshold mismatch: r02 = {r02:.12e} but lambda1 = {lambda1:.12e}; signs of (1 - r02) and lambda1 must agree")]
    InconsistentThreshold { r02: f64, lambda1: f64 },
    #[error("critical length bracket failed: lambda1 stays {sign} on [{lo:.3e}, {hi:.3e}] (c1 must exceed c2 for a zero crossing)")]
    BracketFailure { lo: f64, hi: f64, sign: &'static str },
    #[error("trial function is identically zero")]
    ZeroFunction,
    #[error("operation needs a symmetric kernel, but max asymmetry is {max_asymmetry:.3e}")]
    AsymmetricKernel { max_asymmetry: f64 },
    #[error("coefficient error: {0}")]
    BadCoefficient(String),
    #[error("coefficient field has {got} nodes, grid has {expected}")]
    FieldLength { expected: usize, got: usize },
    #[error("dense oracle accepts at most {max} nodes, grid has {got}")]
    OracleTooLarge { max: usize, got: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Spatially constant or node-sampled coefficient.
#[derive(Debug, Clone)]
pub enum Coeff {
    Const(f64),
    Field(Array1<f64>),
}

impl Coeff {
    fn validate(&self, n: usize, name: &str, nonnegative: bool) -> Result<(), SpectralError> {
        match self {
            Coeff::Const(c) => {
                if !c.is_finite() {
                    return Err(SpectralError::BadCoefficient(format!("{name} is not finite")));
                }
                if nonnegative && *c < 0.0 {
                    return Err(SpectralError::BadCoefficient(format!(
                        "{name} must be nonnegative, got {c}"
                    )));
                }
            }
            Coeff::Field(f) => {
                if f.len() != n {
                    return Err(SpectralError::FieldLength { expected: n, got: f.len() });
                }
                for v in f.iter() {
                    if !v.is_finite() {
                        return Err(SpectralError::BadCoefficient(format!("{name} has non-finite entries")));
                    }
                    if nonnegative && *v < 0.0 {
                        return Err(SpectralError::BadCoefficient(format!(
                            "{name} must be nonnegative everywhere"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn at(&self, i: usize) -> f64 {
        match self {
            Coeff::Const(c) => *c,
            Coeff::Field(f) => f[i],
        }
    }
}

/// Dirichlet eigenproblem `-d φ'' - c1 P[φ] + c2 φ = λ φ` on the kernel's grid.
pub struct EigenProblem<'k> {
    pub d: f64,
    pub c1: Coeff,
    pub c2: Coeff,
    pub kernel: &'k KernelMatrix,
}

/// Principal pair plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda1: f64,
    /// Eigenfunction on the full grid, zero at both ends, sup-normalised to 1.
    pub phi: Array1<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Interior-node matrix of the operator; row/column `0` of the grid and the
/// last node are eliminated by the Dirichlet condition.
fn interior_matrix(p: &EigenProblem) -> Result<Array2<f64>, SpectralError> {
    let grid = p.kernel.grid();
    let n = grid.len();
    if !(p.d.is_finite() && p.d > 0.0) {
        return Err(SpectralError::BadCoefficient(format!("d must be positive, got {}", p.d)));
    }
    p.c1.validate(n, "c1", true)?;
    p.c2.validate(n, "c2", false)?;
    let m = n - 2;
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let mut a = Array2::zeros((m, m));
    for i in 0..m {
        let gi = i + 1;
        let c1 = p.c1.at(gi);
        for j in 0..m {
            let gj = j + 1;
            // Interior trapezoid weights all equal h.
            a[[i, j]] = -c1 * p.kernel.sample(gi, gj) * h;
        }
        a[[i, i]] += 2.0 * p.d * inv_h2 + p.c2.at(gi);
        if i > 0 {
            a[[i, i - 1]] -= p.d * inv_h2;
        }
        if i + 1 < m {
            a[[i, i + 1]] -= p.d * inv_h2;
        }
    }
    Ok(a)
}

fn inf_norm(a: &Array2<f64>) -> f64 {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest-magnitude entry, signed, for orientation-preserving normalisation.
fn dominant(v: &Array1<f64>) -> f64 {
    let mut best = 0.0f64;
    for x in v.iter() {
        if x.abs() > best.abs() {
            best = *x;
        }
    }
    best
}

fn rayleigh(v: &Array1<f64>, av: &Array1<f64>) -> f64 {
    v.dot(av) / v.dot(v)
}

/// Principal (smallest real) eigenvalue and positive eigenfunction.
///
/// All off-diagonal entries of the interior matrix are nonpositive, so for
/// any shift `s` strictly below the spectrum, `(A - sI)^{-1}` is entrywise
/// nonnegative and irreducible; power iteration on it converges to the
/// Perron pair of the inverse, i.e. the principal pair of `A`.
pub fn principal_eigenvalue(p: &EigenProblem) -> Result<EigenPair, SpectralError> {
    let a = interior_matrix(p)?;
    let pair = principal_of_matrix(&a, EIGEN_TOL, EIGEN_MAX_ITER)?;
    Ok(embed(p.kernel.grid(), pair))
}

fn embed(grid: &Grid1D, pair: (f64, Array1<f64>, f64, usize)) -> EigenPair {
    let (lambda1, phi_int, residual, iterations) = pair;
    let n = grid.len();
    let mut phi = Array1::zeros(n);
    for i in 0..phi_int.len() {
        phi[i + 1] = phi_int[i];
    }
    EigenPair { lambda1, phi, residual, iterations }
}

fn principal_of_matrix(
    a: &Array2<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Array1<f64>, f64, usize), SpectralError> {
    let m = a.nrows();
    let scale = inf_norm(a).max(1.0);
    // Residuals cannot drop below the roundoff of forming A*phi.
    let floor = 64.0 * f64::EPSILON * scale;
    let stop = tol.max(floor);

    // Gershgorin lower bound minus margin: a shift provably below lambda1.
    let mut gersh = f64::INFINITY;
    for i in 0..m {
        let mut off = 0.0;
        for j in 0..m {
            if i != j {
                off += a[[i, j]].abs();
            }
        }
        gersh = gersh.min(a[[i, i]] - off);
    }
    let safe_shift = gersh - 1.0 - 1e-12 * scale;

    let run = |refresh: bool| -> Result<(f64, Array1<f64>, f64, usize), SpectralError> {
        let mut factors = lu_factor(&(a - &Array2::from_diag_elem(m, safe_shift)))?;
        let mut v = Array1::from_elem(m, 1.0);
        let mut residual = f64::INFINITY;
        for it in 1..=max_iter {
            let mut w = factors.solve(&v);
            let dom = dominant(&w);
            if dom == 0.0 || !dom.is_finite() {
                return Err(SpectralError::NonConvergence { tol, iterations: it, residual });
            }
            w.mapv_inplace(|x| x / dom);
            v = w;
            let av = a.dot(&v);
            let lambda = rayleigh(&v, &av);
            residual = (0..m)
                .map(|i| (av[i] - lambda * v[i]).abs())
                .fold(0.0, f64::max)
                / v.iter().fold(0.0f64, |mx, x| mx.max(x.abs()));
            if residual < stop {
                return Ok((lambda, v, residual, it));
            }
            if refresh && it % REFRESH_EVERY == 0 {
                // Rayleigh shift; nudge away if the factorisation degenerates.
                let mut s = lambda;
                factors = loop {
                    match lu_factor(&(a - &Array2::from_diag_elem(m, s))) {
                        Ok(f) => break f,
                        Err(_) => s -= 1e-8 * scale.max(s.abs()),
                    }
                };
            }
        }
        Err(SpectralError::NonConvergence { tol, iterations: max_iter, residual })
    };

    let accept = |lambda: f64, v: Array1<f64>, residual: f64, it: usize| {
        let mx = v.iter().fold(0.0f64, |mx, x| mx.max(*x));
        let mn = v.iter().fold(f64::INFINITY, |mn, x| mn.min(*x));
        if mx <= 0.0 || mn / mx < -1e-8 {
            Err(SpectralError::NonPositiveEigenfunction { min_over_max: mn / mx.max(f64::MIN_POSITIVE) })
        } else {
            let mut v = v;
            v.mapv_inplace(|x| (x / mx).max(0.0));
            Ok((lambda, v, residual, it))
        }
    };

    match run(true) {
        Ok((lambda, v, residual, it)) => match accept(lambda, v, residual, it) {
            Ok(out) => Ok(out),
            // Rayleigh refresh can, in principle, lock onto a higher mode;
            // redo with the provably safe fixed shift.
            Err(_) => {
                let (lambda, v, residual, it) = run(false)?;
                accept(lambda, v, residual, it)
            }
        },
        Err(_) => {
            let (lambda, v, residual, it) = run(false)?;
            accept(lambda, v, residual, it)
        }
    }
}

/// Dense oracle: Householder + Sturm on the (symmetrised) interior matrix.
/// Only meaningful when the operator is self-adjoint, i.e. symmetric kernel
/// and constant `c1`; asymmetry beyond roundoff is rejected.
pub fn dense_lambda1(p: &EigenProblem) -> Result<f64, SpectralError> {
    let n = p.kernel.grid().len();
    if n > DENSE_ORACLE_MAX_NODES {
        return Err(SpectralError::OracleTooLarge { max: DENSE_ORACLE_MAX_NODES, got: n });
    }
    let a = interior_matrix(p)?;
    let m = a.nrows();
    let scale = inf_norm(&a).max(1.0);
    let mut max_asym = 0.0f64;
    for i in 0..m {
        for j in 0..i {
            max_asym = max_asym.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    if max_asym > 1e-10 * scale {
        return Err(SpectralError::AsymmetricKernel { max_asymmetry: max_asym });
    }
    let mut sym = a;
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (sym[[i, j]] + sym[[j, i]]);
            sym[[i, j]] = v;
            sym[[j, i]] = v;
        }
    }
    Ok(linalg::dense_symmetric_smallest_eigenvalue(&sym)?)
}

/// Quadratic-form Rayleigh quotient
/// `[d ∫(φ')² - ∬ c1 P φφ + ∫ c2 φ²] / ∫φ²`
/// evaluated with trapezoid quadrature and forward differences. For grid
/// functions vanishing at the boundary this reproduces the interior-matrix
/// quadratic form exactly, so it is an independent expression of the same
/// number the eigensolver minimises.
pub fn rayleigh_quotient(p: &EigenProblem, phi: &Array1<f64>) -> Result<f64, SpectralError> {
    let grid = p.kernel.grid();
    let n = grid.len();
    if phi.len() != n {
        return Err(SpectralError::FieldLength { expected: n, got: phi.len() });
    }
    let h = grid.spacing();
    let w = grid.weights();
    let norm2: f64 = (0..n).map(|i| w[i] * phi[i] * phi[i]).sum();
    if norm2 == 0.0 {
        return Err(SpectralError::ZeroFunction);
    }
    let mut grad = 0.0;
    for i in 0..n - 1 {
        let df = (phi[i + 1] - phi[i]) / h;
        grad += df * df * h;
    }
    let c1_field: Vec<f64> = (0..n).map(|i| p.c1.at(i)).collect();
    let nonlocal = p.kernel.bilinear(&c1_field, phi.as_slice().expect("contiguous phi"))?;
    let local: f64 = (0..n).map(|i| w[i] * p.c2.at(i) * phi[i] * phi[i]).sum();
    Ok((p.d * grad - nonlocal + local) / norm2)
}

/// `λ₁` of the purely local operator `-d φ'' + q φ` on `(l1, l2)` with
/// Dirichlet conditions, constant `q`: closed form `d π²/L² + q`.
pub fn lambda1_local(d: f64, q: f64, interval: (f64, f64)) -> Result<f64, SpectralError> {
    let (l1, l2) = interval;
    if !(l2 > l1) || !l1.is_finite() || !l2.is_finite() {
        return Err(SpectralError::BadCoefficient(format!(
            "interval ({l1}, {l2}) is empty or not finite"
        )));
    }
    if !(d > 0.0) {
        return Err(SpectralError::BadCoefficient(format!("d must be positive, got {d}")));
    }
    let len = l2 - l1;
    Ok(d * std::f64::consts::PI.powi(2) / (len * len) + q)
}

/// Resolution and tolerances for the threshold computations that build
/// their own grids.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EigenNumerics {
    pub n: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenNumerics {
    fn default() -> Self {
        Self { n: 401, tol: EIGEN_TOL, max_iter: EIGEN_MAX_ITER }
    }
}

/// Threshold ratio and the eigenvalue it must agree with in sign.
#[derive(Debug, Clone, Serialize)]
pub struct R02Result {
    pub r02: f64,
    pub lambda1: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// `r02(c1, c2, I) = sup_φ c1 ∬ P φφ / (d ∫(φ')² + c2 ∫φ²)`, the largest
/// eigenvalue of the generalized problem `c1 K φ = ρ (d L + c2 M) φ` on the
/// symmetric interval `(-half, half)`.
///
/// `r02 > 1`, `= 1`, `< 1` correspond exactly to `λ₁ < 0`, `= 0`, `> 0`
/// for the same discrete forms; both are computed and cross-checked, with a
/// disagreement outside tolerance reported as [`SpectralError::InconsistentThreshold`].
pub fn r02(
    d: f64,
    c1: f64,
    c2: f64,
    half: f64,
    spec: &KernelSpec,
    numerics: &EigenNumerics,
) -> Result<R02Result, SpectralError> {
    if !(c1 > 0.0 && c1.is_finite()) {
        return Err(SpectralError::BadCoefficient(format!("c1 must be positive, got {c1}")));
    }
    if !(c2 > 0.0 && c2.is_finite()) {
        return Err(SpectralError::BadCoefficient(format!("c2 must be positive, got {c2}")));
    }
    if !(d > 0.0) {
        return Err(SpectralError::BadCoefficient(format!("d must be positive, got {d}")));
    }
    let grid = Grid1D::symmetric(half, numerics.n)?;
    let kernel = build_kernel(&grid, spec)?;
    if !kernel.is_symmetric() {
        return Err(SpectralError::AsymmetricKernel {
            max_asymmetry: kernel.report().max_asymmetry,
        });
    }
    let n = grid.len();
    let m = n - 2;
    let h = grid.spacing();

    // Numerator form N = c1 h^2 K_int; denominator D = (d/h) T + c2 h I,
    // T the Dirichlet second-difference form. Both are the interior-node
    // quadratic forms of the trapezoid/FD functionals.
    let mut nmat = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            nmat[[i, j]] = c1 * h * h * kernel.sample(i + 1, j + 1);
        }
    }
    let sub = vec![-d / h; m];
    let sup = vec![-d / h; m];
    let diag = vec![2.0 * d / h + c2 * h; m];

    let mut v = Array1::from_elem(m, 1.0);
    let mut rho = 0.0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let scale_n = inf_norm(&nmat).max(f64::MIN_POSITIVE);
    for it in 1..=numerics.max_iter {
        iterations = it;
        let y = nmat.dot(&v);
        let ymax = y.iter().fold(0.0f64, |mx, x| mx.max(x.abs()));
        if ymax == 0.0 {
            // c1 K annihilates everything the denominator allows: ratio 0.
            rho = 0.0;
            residual = 0.0;
            break;
        }
        // Generalized Rayleigh estimate and residual at the current iterate.
        let dv = apply_tridiag(&sub, &diag, &sup, &v);
        let num = v.dot(&y);
        let den = v.dot(&dv);
        rho = num / den;
        residual = (0..m)
            .map(|i| (y[i] - rho * dv[i]).abs())
            .fold(0.0, f64::max)
            / (scale_n * v.iter().fold(0.0f64, |mx, x| mx.max(x.abs())));
        if residual < numerics.tol.max(64.0 * f64::EPSILON) {
            break;
        }
        let z = linalg::tridiag_solve(&sub, &diag, &sup, y.as_slice().expect("contiguous"))?;
        let mut z = Array1::from(z);
        let dom = dominant(&z);
        z.mapv_inplace(|x| x / dom);
        v = z;
        if it == numerics.max_iter {
            return Err(SpectralError::NonConvergence {
                tol: numerics.tol,
                iterations: it,
                residual,
            });
        }
    }

    let lambda1 = principal_eigenvalue(&EigenProblem {
        d,
        c1: Coeff::Const(c1),
        c2: Coeff::Const(c2),
        kernel: &kernel,
    })?
    .lambda1;

    // Sign agreement, with a dead zone where either quantity is numerically 0.
    let zone_r = 1e-7 * (1.0 + rho.abs());
    let zone_l = 1e-7 * (1.0 + lambda1.abs());
    let s_r = 1.0 - rho;
    if (s_r > zone_r && lambda1 < -zone_l) || (s_r < -zone_r && lambda1 > zone_l) {
        return Err(SpectralError::InconsistentThreshold { r02: rho, lambda1 });
    }

    Ok(R02Result { r02: rho, lambda1, residual, iterations })
}

fn apply_tridiag(sub: &[f64], diag: &[f64], sup: &[f64], v: &Array1<f64>) -> Array1<f64> {
    let m = diag.len();
    let mut out = Array1::zeros(m);
    for i in 0..m {
        let mut acc = diag[i] * v[i];
        if i > 0 {
            acc += sub[i] * v[i - 1];
        }
        if i + 1 < m {
            acc += sup[i] * v[i + 1];
        }
        out[i] = acc;
    }
    out
}

/// Result of the critical-length search.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalLength {
    /// Interval length at which `λ₁(c1, c2, (-l/2, l/2))` crosses zero.
    pub l_star: f64,
    /// `λ₁` actually attained there.
    pub lambda_at_l_star: f64,
    /// Eigenvalue evaluations spent.
    pub evaluations: usize,
}

/// Zero crossing of `L ↦ λ₁(c1, c2, (-L/2, L/2))` by bisection.
///
/// The kernel must be a convolution profile; it is sampled raw (no
/// renormalisation) on each candidate interval, since truncation at the
/// interval boundary is part of the operator. `λ₁` is strictly decreasing
/// in the interval, so a sign bracket pins the crossing.
pub fn critical_length(
    d: f64,
    c1: f64,
    c2: f64,
    spec: &KernelSpec,
    numerics: &EigenNumerics,
    tol: f64,
) -> Result<CriticalLength, SpectralError> {
    // Raw convolution samples on every trial interval.
    let raw = KernelSpec { normalization: Normalization::None, ..*spec };
    raw.profile()?; // reject non-convolution families early
    if !(c1 > c2) {
        // The large-interval limit of lambda1 is c2 - c1 (the profile carries
        // unit mass), so the eigenvalue never crosses zero.
        return Err(SpectralError::BracketFailure {
            lo: 0.0,
            hi: f64::INFINITY,
            sign: "positive for every length (c1 <= c2)",
        });
    }
    let mut evals = 0usize;
    let mut lambda_at = |len: f64| -> Result<f64, SpectralError> {
        evals += 1;
        let grid = Grid1D::symmetric(0.5 * len, numerics.n)?;
        let kernel = build_kernel(&grid, &raw)?;
        let pair = principal_eigenvalue(&EigenProblem {
            d,
            c1: Coeff::Const(c1),
            c2: Coeff::Const(c2),
            kernel: &kernel,
        })?;
        Ok(pair.lambda1)
    };

    let mut hi = 100.0 * (d / (c1 - c2).max(1e-6)).sqrt();
    let mut lo = 4.0 * hi / (numerics.n - 1) as f64;
    let mut lambda_lo = lambda_at(lo)?;
    let mut doublings = 0;
    while lambda_lo <= 0.0 {
        // Lower end must sit in the lambda1 > 0 regime.
        lo *= 0.5;
        lambda_lo = lambda_at(lo)?;
        doublings += 1;
        if doublings > 10 {
            return Err(SpectralError::BracketFailure { lo, hi, sign: "nonpositive at the lower end" });
        }
    }
    let mut lambda_hi = lambda_at(hi)?;
    doublings = 0;
    while lambda_hi >= 0.0 {
        hi *= 2.0;
        lambda_hi = lambda_at(hi)?;
        doublings += 1;
        if doublings > 10 {
            return Err(SpectralError::BracketFailure { lo, hi, sign: "nonnegative at the upper end" });
        }
    }

    let mut mid = 0.5 * (lo + hi);
    let mut lambda_mid = lambda_at(mid)?;
    for _ in 0..200 {
        if lambda_mid.abs() < tol {
            break;
        }
        if lambda_mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let next = 0.5 * (lo + hi);
        if next == mid || next <= lo || next >= hi {
            break;
        }
        mid = next;
        lambda_mid = lambda_at(mid)?;
    }
    Ok(CriticalLength { l_star: mid, lambda_at_l_star: lambda_mid, evaluations: evals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn uniform_kernel(n: usize) -> KernelMatrix {
        let grid = Grid1D::new(-1.0, 1.0, n).unwrap();
        build_kernel(&grid, &KernelSpec::uniform()).unwrap()
    }

    /// c1 = 0 reduces to the local operator with known eigenvalue
    /// `d pi^2/L^2 + c2`; second-order accuracy in h.
    #[test]
    fn local_limit_matches_closed_form() {
        let kernel = uniform_kernel(201);
        let pair = principal_eigenvalue(&EigenProblem {
            d: 1.0,
            c1: Coeff::Const(0.0),
            c2: Coeff::Const(2.5),
            kernel: &kernel,
        })
        .unwrap();
        let exact = PI * PI / 4.0 + 2.5;
        assert!((pair.lambda1 - exact).abs() < 1e-4, "{} vs {exact}", pair.lambda1);
        assert!(pair.residual < 1e-9);
        // Eigenfunction is positive, sup-normalised, vanishes at the ends.
        assert_eq!(pair.phi[0], 0.0);
        assert_eq!(pair.phi[200], 0.0);
        let max = pair.phi.iter().fold(0.0f64, |m, x| m.max(*x));
        assert_eq!(max, 1.0);
        assert!(pair.phi.iter().skip(1).take(199).all(|x| *x > 0.0));
    }

    #[test]
    fn shift_identity_is_exact() {
        let kernel = uniform_kernel(201);
        let at = |c2: f64| {
            principal_eigenvalue(&EigenProblem {
                d: 1.0,
                c1: Coeff::Const(5.0),
                c2: Coeff::Const(c2),
                kernel: &kernel,
            })
            .unwrap()
            .lambda1
        };
        let diff = at(3.5) - at(2.5);
        assert!((diff - 1.0).abs() < 1e-10, "shift identity violated: {diff}");
    }

    #[test]
    fn iterative_and_dense_routes_agree() {
        let kernel = uniform_kernel(401);
        let p = EigenProblem {
            d: 1.0,
            c1: Coeff::Const(5.0),
            c2: Coeff::Const(2.5),
            kernel: &kernel,
        };
        let iterative = principal_eigenvalue(&p).unwrap().lambda1;
        let dense = dense_lambda1(&p).unwrap();
        assert!(
            (iterative - dense).abs() < 1e-9,
            "iterative {iterative} dense {dense}"
        );
    }

    #[test]
    fn rayleigh_quotient_of_eigenfunction_is_lambda1() {
        let kernel = uniform_kernel(201);
        let p = EigenProblem {
            d: 1.0,
            c1: Coeff::Const(5.0),
            c2: Coeff::Const(2.5),
            kernel: &kernel,
        };
        let pair = principal_eigenvalue(&p).unwrap();
        let q = rayleigh_quotient(&p, &pair.phi).unwrap();
        assert!((q - pair.lambda1).abs() < 1e-8, "{q} vs {}", pair.lambda1);
    }

    #[test]
    fn rayleigh_quotient_dominates_lambda1_for_random_trials() {
        let kernel = uniform_kernel(101);
        let p = EigenProblem {
            d: 1.0,
            c1: Coeff::Const(5.0),
            c2: Coeff::Const(2.5),
            kernel: &kernel,
        };
        let lambda1 = principal_eigenvalue(&p).unwrap().lambda1;
        let mut s = 0x853c49e6748fea9bu64;
        let mut rnd = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..50 {
            let mut phi = Array1::from_iter((0..101).map(|_| rnd()));
            phi[0] = 0.0;
            phi[100] = 0.0;
            let q = rayleigh_quotient(&p, &phi).unwrap();
            assert!(q >= lambda1 - 1e-8, "trial beat the minimum: {q} < {lambda1}");
        }
    }

    /// Hand-computed value on a 5-node grid: hat function [0, .5, 1, .5, 0],
    /// d = 1, uniform kernel, c1 = 5, c2 = 2.5 gives (2 - 2.5 + 1.875)/0.75.
    #[test]
    fn rayleigh_quotient_matches_hand_computation() {
        let grid = Grid1D::new(-1.0, 1.0, 5).unwrap();
        let kernel = build_kernel(&grid, &KernelSpec::uniform()).unwrap();
        let p = EigenProblem {
            d: 1.0,
            c1: Coeff::Const(5.0),
            c2: Coeff::Const(2.5),
            kernel: &kernel,
        };
        let phi = Array1::from(vec![0.0, 0.5, 1.0, 0.5, 0.0]);
        let q = rayleigh_quotient(&p, &phi).unwrap();
        assert!((q - 11.0 / 6.0).abs() < 1e-12, "{q}");
    }

    #[test]
    fn zero_function_is_rejected() {
        let kernel = uniform_kernel(11);
        let p = EigenProblem {
            d: 1.0,
            c1: Coeff::Const(1.0),
            c2: Coeff::Const(1.0),
            kernel: &kernel,
        };
        assert!(matches!(
            rayleigh_quotient(&p, &Array1::zeros(11)),
            Err(SpectralError::ZeroFunction)
        ));
    }

    #[test]
    fn lambda1_is_monotone_in_coefficients_and_domain() {
        let spec = KernelSpec::truncated_gaussian(0.2, Normalization::None);
        let nm = EigenNumerics { n: 201, ..Default::default() };
        let lam = |c1: f64, c2: f64, half: f64| {
            let grid = Grid1D::symmetric(half, nm.n).unwrap();
            let kernel = build_kernel(&grid, &spec).unwrap();
            principal_eigenvalue(&EigenProblem {
                d: 1.0,
                c1: Coeff::Const(c1),
                c2: Coeff::Const(c2),
                kernel: &kernel,
            })
            .unwrap()
            .lambda1
        };
        // Decreasing in the nonlocal gain, increasing in the local loss,
        // decreasing in the domain.
        assert!(lam(6.0, 2.5, 1.0) < lam(5.0, 2.5, 1.0));
        assert!(lam(5.0, 3.0, 1.0) > lam(5.0, 2.5, 1.0));
        assert!(lam(5.0, 2.5, 1.3) < lam(5.0, 2.5, 1.0));
    }

    #[test]
    fn mesh_refinement_is_second_order() {
        let spec = KernelSpec::truncated_gaussian(0.3, Normalization::None);
        let lam = |n: usize| {
            let grid = Grid1D::new(-1.0, 1.0, n).unwrap();
            let kernel = build_kernel(&grid, &spec).unwrap();
            principal_eigenvalue(&EigenProblem {
                d: 1.0,
                c1: Coeff::Const(5.0),
                c2: Coeff::Const(2.5),
                kernel: &kernel,
            })
            .unwrap()
            .lambda1
        };
        let l1 = lam(101);
        let l2 = lam(201);
        let l3 = lam(401);
        let ratio = (l1 - l2) / (l2 - l3);
        assert!((3.5..4.5).contains(&ratio), "Richardson ratio {ratio}");
    }

    #[test]
    fn variable_coefficients_are_supported() {
        // c1(x) = 5(1 - x^2), c2(x) = 2.5 + x^2: still a positive operator
        // family; lambda1 must lie between the constant-coefficient extremes.
        let grid = Grid1D::new(-1.0, 1.0, 201).unwrap();
        let kernel = build_kernel(&grid, &KernelSpec::uniform()).unwrap();
        let x = grid.nodes();
        let lam_var = principal_eigenvalue(&EigenProblem {
            d: 1.0,
            c1: Coeff::Field(x.mapv(|t| 5.0 * (1.0 - t * t))),
            c2: Coeff::Field(x.mapv(|t| 2.5 + t * t)),
            kernel: &kernel,
        })
        .unwrap();
        let lam_min = principal_eigenvalue(&EigenProblem {
            d: 1.0,
            c1: Coeff::Const(5.0),
            c2: Coeff::Const(2.5),
            kernel: &kernel,
        })
        .unwrap();
        let lam_max = principal_eigenvalue(&EigenProblem {
            d: 1.0,
            c1: Coeff::Const(0.0),
            c2: Coeff::Const(3.5),
            kernel: &kernel,
        })
        .unwrap();
        assert!(lam_var.lambda1 > lam_min.lambda1);
        assert!(lam_var.lambda1 < lam_max.lambda1);
    }

    #[test]
    fn negative_c1_is_rejected() {
        let kernel = uniform_kernel(11);
        let res = principal_eigenvalue(&EigenProblem {
            d: 1.0,
            c1: Coeff::Const(-1.0),
            c2: Coeff::Const(1.0),
            kernel: &kernel,
        });
        assert!(matches!(res, Err(SpectralError::BadCoefficient(_))));
    }

    #[test]
    fn r02_sits_on_the_same_side_as_lambda1() {
        let spec = KernelSpec::truncated_gaussian(0.2, Normalization::None);
        let nm = EigenNumerics { n: 201, ..Default::default() };
        // Strong gain: r02 > 1, lambda1 < 0.
        let strong = r02(1.0, 8.0, 1.0, 2.0, &spec, &nm).unwrap();
        assert!(strong.r02 > 1.0);
        assert!(strong.lambda1 < 0.0);
        // Weak gain: r02 < 1, lambda1 > 0.
        let weak = r02(1.0, 2.0, 2.5, 1.0, &spec, &nm).unwrap();
        assert!(weak.r02 < 1.0);
        assert!(weak.lambda1 > 0.0);
    }

    #[test]
    fn r02_shrinks_to_zero_with_the_gain() {
        let spec = KernelSpec::truncated_gaussian(0.2, Normalization::None);
        let nm = EigenNumerics { n: 101, ..Default::default() };
        let r_small = r02(1.0, 1e-4, 1.0, 1.0, &spec, &nm).unwrap();
        assert!(r_small.r02 < 1e-4, "{}", r_small.r02);
        let r_half = r02(1.0, 0.5, 1.0, 1.0, &spec, &nm).unwrap();
        let r_quarter = r02(1.0, 0.25, 1.0, 1.0, &spec, &nm).unwrap();
        // r02 is linear in c1 by construction.
        assert!((r_half.r02 / r_quarter.r02 - 2.0).abs() < 1e-6);
    }

    /// Dense generalized oracle: reduce `N v = rho D v` to standard form
    /// with the Cholesky factor of D and take the largest eigenvalue by the
    /// direct route.
    #[test]
    fn r02_matches_dense_generalized_oracle() {
        let spec = KernelSpec::truncated_gaussian(0.25, Normalization::None);
        let nm = EigenNumerics { n: 151, ..Default::default() };
        let (d, c1, c2, half) = (1.0, 5.0, 2.5, 1.0);
        let got = r02(d, c1, c2, half, &spec, &nm).unwrap().r02;

        let grid = Grid1D::symmetric(half, nm.n).unwrap();
        let kernel = build_kernel(&grid, &spec).unwrap();
        let m = nm.n - 2;
        let h = grid.spacing();
        let mut nmat = Array2::zeros((m, m));
        for i in 0..m {
            for j in 0..m {
                nmat[[i, j]] = c1 * h * h * kernel.sample(i + 1, j + 1);
            }
        }
        let mut dmat = Array2::zeros((m, m));
        for i in 0..m {
            dmat[[i, i]] = 2.0 * d / h + c2 * h;
            if i > 0 {
                dmat[[i, i - 1]] = -d / h;
            }
            if i + 1 < m {
                dmat[[i, i + 1]] = -d / h;
            }
        }
        let l = crate::linalg::cholesky(&dmat).unwrap();
        // C = L^{-1} N L^{-T} via two triangular solves per column.
        let mut c = Array2::zeros((m, m));
        for col in 0..m {
            // y = L^{-1} n_col
            let mut y = nmat.column(col).to_owned();
            for i in 0..m {
                let mut acc = y[i];
                for k in 0..i {
                    acc -= l[[i, k]] * y[k];
                }
                y[i] = acc / l[[i, i]];
            }
            for i in 0..m {
                c[[i, col]] = y[i];
            }
        }
        // Now rows: C <- C L^{-T} means solving L z = c_row for each row.
        for row in 0..m {
            let mut y: Vec<f64> = (0..m).map(|j| c[[row, j]]).collect();
            for i in 0..m {
                let mut acc = y[i];
                for k in 0..i {
                    acc -= l[[i, k]] * y[k];
                }
                y[i] = acc / l[[i, i]];
            }
            for j in 0..m {
                c[[row, j]] = y[j];
            }
        }
        let oracle = crate::linalg::dense_symmetric_largest_eigenvalue(&c).unwrap();
        assert!((got - oracle).abs() < 1e-8, "power {got} oracle {oracle}");
    }

    #[test]
    fn critical_length_approaches_the_local_limit_for_narrow_kernels() {
        // Narrow kernel: P[phi] ~ phi, so lambda1 ~ d pi^2/L^2 - (c1 - c2)
        // and the zero crossing sits near pi sqrt(d/(c1-c2)).
        let spec = KernelSpec::truncated_gaussian(0.05, Normalization::None);
        let nm = EigenNumerics { n: 201, ..Default::default() };
        let out = critical_length(1.0, 5.0, 2.5, &spec, &nm, 1e-9).unwrap();
        let local = PI * (1.0 / 2.5f64).sqrt();
        assert!(
            (out.l_star - local).abs() < 0.1 * local,
            "l* {} vs local limit {local}",
            out.l_star
        );
        assert!(out.lambda_at_l_star.abs() < 1e-9);
    }

    #[test]
    fn critical_length_needs_gain_exceeding_loss() {
        let spec = KernelSpec::truncated_gaussian(0.1, Normalization::None);
        let nm = EigenNumerics { n: 101, ..Default::default() };
        let res = critical_length(1.0, 2.0, 2.5, &spec, &nm, 1e-9);
        assert!(matches!(res, Err(SpectralError::BracketFailure { .. })));
    }

    #[test]
    fn lambda1_local_closed_forms() {
        let v = lambda1_local(1.0, 2.5, (-1.0, 1.0)).unwrap();
        assert!((v - (PI * PI / 4.0 + 2.5)).abs() < 1e-14);
        // The steady-state existence gate: d pi^2/4 + (beta - a).
        let gate = lambda1_local(0.01, -1.0, (-1.0, 1.0)).unwrap();
        assert!(gate < 0.0);
        let gate_big_d = lambda1_local(1.0, -1.0, (-1.0, 1.0)).unwrap();
        assert!((gate_big_d - 1.4674011002723395).abs() < 1e-12);
        assert!(lambda1_local(1.0, 0.0, (1.0, -1.0)).is_err());
    }
}
