//! Uniform 1-D grids with trapezoid quadrature.
//!
//! Every spatial module in the crate works on node values over a [`Grid1D`].
//! The trapezoid rule is used for all integrals so that quadrature and the
//! second-order finite-difference stencils share one accuracy order.

use ndarray::Array1;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("grid interval is empty or reversed: [{0}, {1}]")]
    EmptyInterval(f64, f64),
    #[error("grid bounds must be finite: [{0}, {1}]")]
    NonFiniteBounds(f64, f64),
}

/// Closed interval `[left, right]` sampled at `n` equispaced nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    left: f64,
    right: f64,
    n: usize,
}

impl Grid1D {
    pub fn new(left: f64, right: f64, n: usize) -> Result<Self, GridError> {
        if !left.is_finite() || !right.is_finite() {
            return Err(GridError::NonFiniteBounds(left, right));
        }
        if left >= right {
            return Err(GridError::EmptyInterval(left, right));
        }
        if n < 3 {
            return Err(GridError::TooFewNodes(n));
        }
        Ok(Self { left, right, n })
    }

    /// Symmetric grid `[-half, half]`; node `(n-1)/2` is exactly 0 when `n`
    /// is odd, and mirrored nodes are exact floating-point negatives.
    pub fn symmetric(half: f64, n: usize) -> Result<Self, GridError> {
        Self::new(-half, half, n)
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn measure(&self) -> f64 {
        self.right - self.left
    }

    pub fn spacing(&self) -> f64 {
        (self.right - self.left) / (self.n - 1) as f64
    }

    /// Node coordinate. For symmetric grids this is computed about the
    /// midpoint so that `node(i) == -node(n-1-i)` exactly.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i < self.n);
        let mid = 0.5 * (self.left + self.right);
        let offset = i as f64 - 0.5 * (self.n - 1) as f64;
        mid + offset * self.spacing()
    }

    pub fn nodes(&self) -> Array1<f64> {
        Array1::from_iter((0..self.n).map(|i| self.node(i)))
    }

    /// Trapezoid weights: `h/2` at the two ends, `h` inside. They sum to the
    /// interval length exactly up to roundoff.
    pub fn weights(&self) -> Array1<f64> {
        let h = self.spacing();
        let mut w = Array1::from_elem(self.n, h);
        w[0] = 0.5 * h;
        w[self.n - 1] = 0.5 * h;
        w
    }

    /// Trapezoid quadrature of node values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.n, "value/grid length mismatch");
        let h = self.spacing();
        let mut acc = 0.5 * (values[0] + values[self.n - 1]);
        for v in &values[1..self.n - 1] {
            acc += v;
        }
        acc * h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert_eq!(Grid1D::new(0.0, 1.0, 2).unwrap_err(), GridError::TooFewNodes(2));
        assert_eq!(
            Grid1D::new(1.0, 1.0, 5).unwrap_err(),
            GridError::EmptyInterval(1.0, 1.0)
        );
        assert!(Grid1D::new(f64::NAN, 1.0, 5).is_err());
    }

    #[test]
    fn nodes_and_spacing() {
        let g = Grid1D::new(-1.0, 1.0, 201).unwrap();
        assert_eq!(g.spacing(), 0.01);
        assert_eq!(g.node(0), -1.0);
        assert_eq!(g.node(200), 1.0);
        assert_eq!(g.node(100), 0.0);
    }

    #[test]
    fn symmetric_nodes_are_exact_negatives() {
        let g = Grid1D::symmetric(0.3, 61).unwrap();
        for i in 0..61 {
            assert_eq!(g.node(i), -g.node(60 - i), "node {i}");
        }
    }

    #[test]
    fn weights_sum_to_measure() {
        let g = Grid1D::new(-1.0, 1.0, 201).unwrap();
        let total: f64 = g.weights().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_is_exact_for_linear_functions() {
        let g = Grid1D::new(-1.0, 1.0, 201).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|x| 0.5 * (1.0 + x)).collect();
        assert!((g.integrate(&vals) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_is_second_order_for_smooth_functions() {
        let exact = 2.0 * 1.0_f64.sin();
        let err = |n: usize| {
            let g = Grid1D::new(-1.0, 1.0, n).unwrap();
            let vals: Vec<f64> = g.nodes().iter().map(|x| x.cos()).collect();
            (g.integrate(&vals) - exact).abs()
        };
        let ratio = err(101) / err(201);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }
}
