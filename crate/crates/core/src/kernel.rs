//! Discretisation of the nonlocal contact operator `P[u](x) = ∫ P(x,y) u(y) dy`.
//!
//! A kernel is sampled on a [`Grid1D`] and paired with trapezoid weights, so
//! `apply` computes `v_i = Σ_j P(x_i, y_j) w_j u_j`. Normalisation is stated
//! in quadrature terms: a column `j` is *normalised* when its discrete
//! integral over the first argument, `Σ_i w_i P(x_i, y_j)`, equals 1. That
//! convention keeps three facts simultaneously true, which plain unweighted
//! column sums cannot: the uniform kernel is exactly normalised *and* exactly
//! symmetric, and `∫ P[u] dx = ∫ u dy` holds discretely.
//!
//! Families:
//! * `Uniform` - `P ≡ 1/|Ω|`; the one kernel that is exactly column
//!   normalised and exactly symmetric at once, and whose application
//!   collapses to a single quadrature (used as a fast path).
//! * `TopHat` - `J(r) = 1/(2w)` for `|r| ≤ w`; even, bounded, discontinuous
//!   at the support edge.
//! * `TruncatedGaussian` - Gaussian of standard deviation `width`, truncated
//!   at `5·width` and shifted to zero there, then rescaled so the line
//!   integral is exactly 1. The shift keeps it continuous (hence Lipschitz),
//!   which the free-boundary theory needs.

use crate::grid::Grid1D;
use ndarray::{Array1, Array2};
use serde::Serialize;
use thiserror::Error;

/// Sinkhorn stopping tolerance on the worst row/column integral deviation.
pub const SINKHORN_TOL: f64 = 1e-10;
/// Hard cap on Sinkhorn sweeps before reporting non-convergence.
pub const SINKHORN_MAX_SWEEPS: usize = 100_000;
/// Column integrals must match 1 this tightly after column normalisation.
pub const COLUMN_TOL: f64 = 1e-12;
/// Entrywise asymmetry below this counts as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Gaussian truncation radius in standard deviations.
const GAUSS_CUT_SIGMAS: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernel width must be positive and finite, got {0}")]
    BadWidth(f64),
    #[error("Sinkhorn scaling did not reach {tol:.1e} in {sweeps} sweeps (residual {residual:.3e})")]
    SinkhornNonConvergence { tol: f64, sweeps: usize, residual: f64 },
    #[error("kernel column {0} has zero integral; normalisation impossible")]
    ZeroColumn(usize),
    #[error("field has {got} nodes but kernel was built on {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{family:?} is not a convolution kernel; this operation needs a translation-invariant profile")]
    NotConvolution { family: KernelFamily },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelFamily {
    Uniform,
    TopHat,
    TruncatedGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Normalization {
    /// Leave raw samples; deviations are only reported.
    None,
    /// Scale each column so its discrete integral over the first argument is 1.
    ColumnStochastic,
    /// Symmetric diagonal scaling to a doubly normalised, symmetric kernel.
    SinkhornSymmetric,
}

/// Recipe for building a kernel matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Half-width of the top hat, or standard deviation of the Gaussian.
    /// Ignored by `Uniform`.
    pub width: f64,
    pub normalization: Normalization,
}

impl KernelSpec {
    pub fn uniform() -> Self {
        Self {
            family: KernelFamily::Uniform,
            width: 1.0,
            normalization: Normalization::ColumnStochastic,
        }
    }

    pub fn top_hat(width: f64, normalization: Normalization) -> Self {
        Self { family: KernelFamily::TopHat, width, normalization }
    }

    pub fn truncated_gaussian(width: f64, normalization: Normalization) -> Self {
        Self {
            family: KernelFamily::TruncatedGaussian,
            width,
            normalization,
        }
    }

    /// Translation-invariant profile `J(r)` with compact support radius, for
    /// solvers that integrate the kernel directly over moving intervals.
    pub fn profile(&self) -> Result<ConvolutionProfile, KernelError> {
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(KernelError::BadWidth(self.width));
        }
        match self.family {
            KernelFamily::Uniform => Err(KernelError::NotConvolution { family: self.family }),
            KernelFamily::TopHat => Ok(ConvolutionProfile {
                kind: ProfileKind::TopHat { inv: 0.5 / self.width },
                radius: self.width,
            }),
            KernelFamily::TruncatedGaussian => {
                let sigma = self.width;
                let cut = GAUSS_CUT_SIGMAS;
                let floor = (-0.5 * cut * cut).exp();
                // Line integral of exp(-r^2/(2 s^2)) - floor over [-cut s, cut s],
                // divided by s: a fixed constant, evaluated once by Simpson
                // quadrature on the unit-sigma profile.
                let norm = sigma * unit_gaussian_mass();
                Ok(ConvolutionProfile {
                    kind: ProfileKind::Gaussian {
                        inv_two_sigma2: 0.5 / (sigma * sigma),
                        floor,
                        scale: 1.0 / norm,
                    },
                    radius: cut * sigma,
                })
            }
        }
    }
}

/// `∫ (exp(-z^2/2) - exp(-cut^2/2)) dz` over `[-cut, cut]`, by composite
/// Simpson with enough points that the result is exact to roundoff.
fn unit_gaussian_mass() -> f64 {
    let cut = GAUSS_CUT_SIGMAS;
    let floor = (-0.5 * cut * cut).exp();
    let m = 4000usize;
    let h = 2.0 * cut / m as f64;
    let f = |z: f64| (-0.5 * z * z).exp() - floor;
    let mut acc = f(-cut) + f(cut);
    for i in 1..m {
        let z = -cut + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 * f(z) } else { 2.0 * f(z) };
    }
    acc * h / 3.0
}

#[derive(Debug, Clone, Copy)]
enum ProfileKind {
    TopHat { inv: f64 },
    Gaussian { inv_two_sigma2: f64, floor: f64, scale: f64 },
}

/// Even, compactly supported convolution profile `J(r)`, `∫_R J = 1`.
#[derive(Debug, Clone, Copy)]
pub struct ConvolutionProfile {
    kind: ProfileKind,
    radius: f64,
}

impl ConvolutionProfile {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `J(r)`; evaluated through `|r|` so mirrored arguments give identical
    /// floating-point values.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        if r > self.radius {
            return 0.0;
        }
        match self.kind {
            ProfileKind::TopHat { inv } => inv,
            ProfileKind::Gaussian { inv_two_sigma2, floor, scale } => {
                ((-r * r * inv_two_sigma2).exp() - floor).max(0.0) * scale
            }
        }
    }
}

/// Per-build diagnostics of the discrete kernel.
#[derive(Debug, Clone, Serialize)]
pub struct NormalizationReport {
    /// Worst deviation of a column integral `Σ_i w_i P(x_i, y_j)` from 1.
    pub max_column_deviation: f64,
    /// Worst deviation of a row integral `Σ_j w_j P(x_i, y_j)` from 1.
    pub max_row_deviation: f64,
    /// Largest `|P(x_i,y_j) - P(x_j,y_i)|`.
    pub max_asymmetry: f64,
    /// All sampled values strictly positive (strong positivity hypothesis),
    /// as opposed to merely nonnegative.
    pub strictly_positive: bool,
    /// Set when the profile support is narrower than the grid spacing, which
    /// makes the quadrature blind to the kernel shape.
    pub under_resolved: bool,
    /// Sinkhorn sweeps actually used (0 unless SinkhornSymmetric).
    pub sinkhorn_sweeps: usize,
}

enum ApplyPath {
    /// General dense matrix-vector product with `P diag(w)`.
    Dense,
    /// Uniform kernel: `P ≡ c`, so `P[u] = c ∫u` at every node.
    ConstantKernel { value: f64 },
}

/// Discrete nonlocal operator on a fixed grid.
pub struct KernelMatrix {
    grid: Grid1D,
    /// Normalised kernel samples `P(x_i, y_j)`, row = output node.
    samples: Array2<f64>,
    weights: Array1<f64>,
    symmetric: bool,
    report: NormalizationReport,
    path: ApplyPath,
}

pub fn build_kernel(grid: &Grid1D, spec: &KernelSpec) -> Result<KernelMatrix, KernelError> {
    if !(spec.width.is_finite() && spec.width > 0.0) {
        return Err(KernelError::BadWidth(spec.width));
    }
    let n = grid.len();
    let nodes = grid.nodes();
    let weights = grid.weights();

    let mut samples = Array2::zeros((n, n));
    let mut under_resolved = false;
    match spec.family {
        KernelFamily::Uniform => {
            samples.fill(1.0 / grid.measure());
        }
        _ => {
            let profile = spec.profile()?;
            under_resolved = profile.radius() < grid.spacing();
            for i in 0..n {
                for j in 0..n {
                    samples[[i, j]] = profile.eval(nodes[i] - nodes[j]);
                }
            }
        }
    }

    let mut sweeps = 0usize;
    match spec.normalization {
        Normalization::None => {}
        Normalization::ColumnStochastic => {
            for j in 0..n {
                let integral: f64 = (0..n).map(|i| weights[i] * samples[[i, j]]).sum();
                if integral <= 0.0 {
                    return Err(KernelError::ZeroColumn(j));
                }
                let inv = 1.0 / integral;
                for i in 0..n {
                    samples[[i, j]] *= inv;
                }
            }
        }
        Normalization::SinkhornSymmetric => {
            sweeps = sinkhorn_symmetric(&mut samples, &weights)?;
        }
    }

    let report = diagnose(&samples, &weights, under_resolved, sweeps);
    let symmetric = report.max_asymmetry < SYMMETRY_TOL;
    let path = match spec.family {
        // Normalisation keeps a constant kernel constant, so record the
        // (possibly rescaled) value for the collapsed apply path.
        KernelFamily::Uniform => ApplyPath::ConstantKernel { value: samples[[0, 0]] },
        _ => ApplyPath::Dense,
    };
    Ok(KernelMatrix {
        grid: *grid,
        samples,
        weights,
        symmetric,
        report,
        path,
    })
}

/// Symmetric Sinkhorn scaling `P <- diag(u) P diag(u)` driving every weighted
/// column integral to 1. The square-root update is the symmetry-preserving
/// form of alternating row/column scaling; for symmetric nonnegative kernels
/// with strictly positive column integrals it converges linearly.
fn sinkhorn_symmetric(samples: &mut Array2<f64>, weights: &Array1<f64>) -> Result<usize, KernelError> {
    let n = weights.len();
    let mut u = vec![1.0_f64; n];
    let mut integral = vec![0.0_f64; n];
    let mut residual = f64::INFINITY;
    for sweep in 1..=SINKHORN_MAX_SWEEPS {
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += weights[i] * u[i] * samples[[i, j]];
            }
            integral[j] = acc * u[j];
        }
        residual = integral.iter().map(|c| (c - 1.0).abs()).fold(0.0, f64::max);
        if residual < SINKHORN_TOL {
            for i in 0..n {
                for j in 0..n {
                    samples[[i, j]] *= u[i] * u[j];
                }
            }
            return Ok(sweep);
        }
        for (j, c) in integral.iter().enumerate() {
            if *c <= 0.0 || !c.is_finite() {
                return Err(KernelError::ZeroColumn(j));
            }
            u[j] /= c.sqrt();
        }
    }
    Err(KernelError::SinkhornNonConvergence {
        tol: SINKHORN_TOL,
        sweeps: SINKHORN_MAX_SWEEPS,
        residual,
    })
}

fn diagnose(
    samples: &Array2<f64>,
    weights: &Array1<f64>,
    under_resolved: bool,
    sinkhorn_sweeps: usize,
) -> NormalizationReport {
    let n = weights.len();
    let mut max_col = 0.0_f64;
    let mut max_row = 0.0_f64;
    for j in 0..n {
        let col: f64 = (0..n).map(|i| weights[i] * samples[[i, j]]).sum();
        max_col = max_col.max((col - 1.0).abs());
    }
    for i in 0..n {
        let row: f64 = (0..n).map(|j| weights[j] * samples[[i, j]]).sum();
        max_row = max_row.max((row - 1.0).abs());
    }
    let mut max_asym = 0.0_f64;
    let mut strictly_positive = true;
    for i in 0..n {
        if samples[[i, i]] <= 0.0 {
            strictly_positive = false;
        }
        for j in 0..i {
            max_asym = max_asym.max((samples[[i, j]] - samples[[j, i]]).abs());
            if samples[[i, j]] <= 0.0 || samples[[j, i]] <= 0.0 {
                strictly_positive = false;
            }
        }
    }
    NormalizationReport {
        max_column_deviation: max_col,
        max_row_deviation: max_row,
        max_asymmetry: max_asym,
        strictly_positive,
        under_resolved,
        sinkhorn_sweeps,
    }
}

impl KernelMatrix {
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn report(&self) -> &NormalizationReport {
        &self.report
    }

    /// Normalised kernel sample `P(x_i, y_j)`.
    pub fn sample(&self, i: usize, j: usize) -> f64 {
        self.samples[[i, j]]
    }

    /// Entry of the apply matrix `P(x_i,y_j) w_j`, i.e. the weight that node
    /// `j` of the input contributes to node `i` of the output.
    pub fn apply_weight(&self, i: usize, j: usize) -> f64 {
        self.samples[[i, j]] * self.weights[j]
    }

    pub fn quadrature_weights(&self) -> &Array1<f64> {
        &self.weights
    }

    /// `v_i = Σ_j P(x_i,y_j) w_j u_j`, the trapezoid discretisation of
    /// `∫ P(x_i, y) u(y) dy`.
    pub fn apply(&self, u: &Array1<f64>) -> Result<Array1<f64>, KernelError> {
        let mut out = Array1::zeros(self.len());
        self.apply_into(u.as_slice().expect("contiguous input"), out.as_slice_mut().unwrap())?;
        Ok(out)
    }

    /// Allocation-free apply for time-stepping loops.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) -> Result<(), KernelError> {
        let n = self.len();
        if u.len() != n || out.len() != n {
            return Err(KernelError::DimensionMismatch { expected: n, got: u.len() });
        }
        match self.path {
            ApplyPath::ConstantKernel { value } => {
                let w = self.weights.as_slice().unwrap();
                let mut acc = 0.0;
                for j in 0..n {
                    acc += w[j] * u[j];
                }
                let v = value * acc;
                out.fill(v);
            }
            ApplyPath::Dense => {
                let w = self.weights.as_slice().unwrap();
                let samples = self.samples.as_slice().unwrap();
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &samples[i * n..(i + 1) * n];
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += row[j] * w[j] * u[j];
                    }
                    *o = acc;
                }
            }
        }
        Ok(())
    }

    /// Quadratic form `∬ c(x) P(x,y) φ(y) φ(x) dy dx` with node samples of
    /// `c` and `φ`; used by Rayleigh quotients.
    pub fn bilinear(&self, c: &[f64], phi: &[f64]) -> Result<f64, KernelError> {
        let n = self.len();
        if c.len() != n || phi.len() != n {
            return Err(KernelError::DimensionMismatch { expected: n, got: phi.len() });
        }
        let mut inner = vec![0.0; n];
        self.apply_into(phi, &mut inner)?;
        let w = self.weights.as_slice().unwrap();
        let mut acc = 0.0;
        for i in 0..n {
            acc += w[i] * c[i] * phi[i] * inner[i];
        }
        Ok(acc)
    }
}

/// Recompute the diagnostics of an existing kernel (the build-time report is
/// cached; this is the checkable entry point).
pub fn check_normalization(kernel: &KernelMatrix) -> NormalizationReport {
    diagnose(
        &kernel.samples,
        &kernel.weights,
        kernel.report.under_resolved,
        kernel.report.sinkhorn_sweeps,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Grid1D {
        Grid1D::new(-1.0, 1.0, 201).unwrap()
    }

    #[test]
    fn uniform_kernel_is_exactly_normalised_and_symmetric() {
        let k = build_kernel(&grid(), &KernelSpec::uniform()).unwrap();
        let rep = k.report();
        assert!(rep.max_column_deviation < 1e-13, "{}", rep.max_column_deviation);
        assert!(rep.max_row_deviation < 1e-13);
        // Identical column integrals mean renormalisation cannot introduce
        // any asymmetry at all.
        assert_eq!(rep.max_asymmetry, 0.0);
        assert!(k.is_symmetric());
        assert!(rep.strictly_positive);
        // Every apply-matrix entry is 1/2 x quadrature weight, up to the
        // roundoff of the normalising division.
        for (i, j) in [(0usize, 0usize), (0, 100), (100, 200), (57, 3)] {
            let w = k.quadrature_weights()[j];
            assert!((k.apply_weight(i, j) - 0.5 * w).abs() < 1e-15 * w.max(1.0));
        }
    }

    #[test]
    fn top_hat_columns_integrate_to_one() {
        let spec = KernelSpec::top_hat(0.5, Normalization::ColumnStochastic);
        let k = build_kernel(&grid(), &spec).unwrap();
        assert!(k.report().max_column_deviation < COLUMN_TOL);
        // Column scaling breaks the convolution symmetry near the boundary.
        assert!(!k.is_symmetric());
    }

    #[test]
    fn sinkhorn_gaussian_is_symmetric_and_doubly_normalised() {
        let spec = KernelSpec::truncated_gaussian(0.3, Normalization::SinkhornSymmetric);
        let k = build_kernel(&grid(), &spec).unwrap();
        let rep = k.report();
        assert!(rep.max_column_deviation < SINKHORN_TOL * 10.0, "{}", rep.max_column_deviation);
        assert!(rep.max_row_deviation < SINKHORN_TOL * 10.0);
        assert!(k.is_symmetric(), "asymmetry {}", rep.max_asymmetry);
        assert!(rep.sinkhorn_sweeps > 0);
    }

    #[test]
    fn unnormalised_gaussian_reports_boundary_mass_loss() {
        let spec = KernelSpec::truncated_gaussian(0.15, Normalization::None);
        let k = build_kernel(&grid(), &spec).unwrap();
        let rep = k.report();
        // Interior columns keep their mass; columns near +-1 lose about half.
        assert!(rep.max_column_deviation > 0.2, "{}", rep.max_column_deviation);
        assert!(rep.max_asymmetry < SYMMETRY_TOL);
        assert!(!rep.strictly_positive);
    }

    #[test]
    fn apply_of_linear_function_under_uniform_kernel_is_its_mean_mass() {
        // ∫ (1/2)(1 + y) dy over (-1,1) = 1, and trapezoid is exact on
        // linear integrands, so v ≡ 1 to roundoff.
        let k = build_kernel(&grid(), &KernelSpec::uniform()).unwrap();
        let u = grid().nodes().mapv(|x| 1.0 + x);
        let v = k.apply(&u).unwrap();
        for value in v.iter() {
            assert!((value - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_kernel_fast_path_matches_dense_arithmetic() {
        let g = grid();
        let k = build_kernel(&g, &KernelSpec::uniform()).unwrap();
        let u = g.nodes().mapv(|x: f64| (3.0 * x).sin().abs() + 0.2);
        let fast = k.apply(&u).unwrap();
        // Dense reference from the stored samples.
        let w = k.quadrature_weights();
        for i in 0..g.len() {
            let mut acc = 0.0;
            for j in 0..g.len() {
                acc += k.sample(i, j) * w[j] * u[j];
            }
            assert!((fast[i] - acc).abs() <= 1e-15 * acc.abs().max(1.0));
        }
    }

    #[test]
    fn apply_preserves_mass_for_column_stochastic_kernels() {
        let g = grid();
        for spec in [
            KernelSpec::uniform(),
            KernelSpec::top_hat(0.4, Normalization::ColumnStochastic),
            KernelSpec::truncated_gaussian(0.2, Normalization::ColumnStochastic),
        ] {
            let k = build_kernel(&g, &spec).unwrap();
            let u = g.nodes().mapv(|x: f64| (x * 2.0).cos() + 1.5);
            let v = k.apply(&u).unwrap();
            let mass_in = g.integrate(u.as_slice().unwrap());
            let mass_out = g.integrate(v.as_slice().unwrap());
            assert!(
                (mass_in - mass_out).abs() < 1e-10,
                "{spec:?}: {mass_in} vs {mass_out}"
            );
        }
    }

    #[test]
    fn apply_rejects_mismatched_lengths() {
        let k = build_kernel(&grid(), &KernelSpec::uniform()).unwrap();
        let u = Array1::zeros(7);
        assert!(matches!(
            k.apply(&u),
            Err(KernelError::DimensionMismatch { expected: 201, got: 7 })
        ));
    }

    #[test]
    fn zero_column_is_reported_not_divided_by() {
        // A top hat narrower than the spacing leaves off-diagonal columns
        // empty only if width < spacing/2 at the very corner; easier: a grid
        // where the support misses all nodes for the corner column cannot be
        // built from these families, so drive Sinkhorn with a hostile width
        // instead and expect a clean error rather than NaNs.
        let g = Grid1D::new(-1.0, 1.0, 11).unwrap();
        let spec = KernelSpec::top_hat(1e-9, Normalization::ColumnStochastic);
        let k = build_kernel(&g, &spec);
        // Support narrower than spacing: only the diagonal survives, columns
        // still have positive integral, but the build must flag resolution.
        let k = k.unwrap();
        assert!(k.report().under_resolved);
    }

    #[test]
    fn width_must_be_positive() {
        let g = grid();
        for bad in [0.0, -1.0, f64::NAN] {
            let spec = KernelSpec::top_hat(bad, Normalization::None);
            assert!(matches!(build_kernel(&g, &spec), Err(KernelError::BadWidth(_))));
        }
    }

    #[test]
    fn gaussian_profile_integrates_to_one_on_the_line() {
        let spec = KernelSpec::truncated_gaussian(0.37, Normalization::None);
        let p = spec.profile().unwrap();
        // Fine trapezoid over the support.
        let m = 20_001;
        let g = Grid1D::new(-p.radius(), p.radius(), m).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|x| p.eval(*x)).collect();
        let mass = g.integrate(&vals);
        assert!((mass - 1.0).abs() < 1e-10, "mass {mass}");
        // Continuity at the cut.
        assert!(p.eval(p.radius() - 1e-12) < 1e-9);
        assert_eq!(p.eval(p.radius() + 1e-12), 0.0);
    }

    #[test]
    fn top_hat_profile_integrates_to_one() {
        let spec = KernelSpec::top_hat(0.25, Normalization::None);
        let p = spec.profile().unwrap();
        assert_eq!(p.radius(), 0.25);
        assert!((p.eval(0.1) - 2.0).abs() < 1e-15);
        assert_eq!(p.eval(0.26), 0.0);
    }

    #[test]
    fn uniform_has_no_convolution_profile() {
        assert!(matches!(
            KernelSpec::uniform().profile(),
            Err(KernelError::NotConvolution { family: KernelFamily::Uniform })
        ));
    }

    #[test]
    fn kernel_quadrature_converges_second_order() {
        // P[u](0) for a Gaussian kernel and smooth u, against a fine
        // reference; halving h should quarter the error.
        let spec = KernelSpec::truncated_gaussian(0.4, Normalization::None);
        let value_at_zero = |n: usize| {
            let g = Grid1D::new(-1.0, 1.0, n).unwrap();
            let k = build_kernel(&g, &spec).unwrap();
            let u = g.nodes().mapv(|x: f64| (2.0 * x).cos());
            k.apply(&u).unwrap()[(n - 1) / 2]
        };
        let reference = value_at_zero(6401);
        let e1 = (value_at_zero(101) - reference).abs();
        let e2 = (value_at_zero(201) - reference).abs();
        let ratio = e1 / e2;
        assert!((3.3..4.7).contains(&ratio), "ratio {ratio} (e1 {e1}, e2 {e2})");
    }

    proptest! {
        /// Linearity and positivity of the discrete operator.
        #[test]
        fn apply_is_linear_and_positive(
            seed in 0u64..1000,
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let g = Grid1D::new(-1.0, 1.0, 41).unwrap();
            let k = build_kernel(&g, &KernelSpec::top_hat(0.5, Normalization::ColumnStochastic)).unwrap();
            let mut s = seed.wrapping_mul(2654435761).wrapping_add(1);
            let mut rand01 = move || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            };
            let u = Array1::from_iter((0..41).map(|_| rand01()));
            let v = Array1::from_iter((0..41).map(|_| rand01()));

            let lhs = k.apply(&(alpha * &u + beta * &v)).unwrap();
            let rhs = alpha * &k.apply(&u).unwrap() + beta * &k.apply(&v).unwrap();
            for i in 0..41 {
                prop_assert!((lhs[i] - rhs[i]).abs() < 1e-12);
            }
            // Nonnegative input gives nonnegative output.
            let pu = k.apply(&u).unwrap();
            for value in pu.iter() {
                prop_assert!(*value >= 0.0);
            }
        }

        /// Sup bound: `|P[u]| <= max_row_integral * sup|u|`.
        #[test]
        fn apply_respects_the_sup_bound(seed in 0u64..1000) {
            let g = Grid1D::new(-1.0, 1.0, 41).unwrap();
            let k = build_kernel(&g, &KernelSpec::truncated_gaussian(0.3, Normalization::SinkhornSymmetric)).unwrap();
            let mut s = seed.wrapping_mul(0x9e3779b9).wrapping_add(17);
            let mut rand01 = move || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            };
            let u = Array1::from_iter((0..41).map(|_| rand01() * 2.0 - 1.0));
            let sup_u = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let bound = (1.0 + k.report().max_row_deviation) * sup_u;
            let v = k.apply(&u).unwrap();
            for value in v.iter() {
                prop_assert!(value.abs() <= bound + 1e-12);
            }
        }
    }
}
