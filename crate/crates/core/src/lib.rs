//! Numerical laboratory for a family of SIR epidemic models in which new
//! infections are driven by a nonlocal contact operator
//! `P[I](x) = ∫ P(x,y) I(y) dy` instead of the pointwise product `k·I·S`.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]    - 1-D uniform grids and trapezoid quadrature,
//! * [`linalg`]  - small dense solvers (LU, Thomas, Householder + Sturm),
//! * [`kernel`]  - contact-kernel discretisation and normalisation,
//! * [`spectral`] - principal eigenvalues, the threshold ratio `r02`, and
//!   critical domain lengths,
//! * [`kinetics`] - spatially homogeneous quantities: reproduction number,
//!   equilibria, logistic envelopes, the four-ODE comparison system and its
//!   Lyapunov functional,
//! * [`ibvp`]    - explicit finite-difference solvers for the Neumann and
//!   Dirichlet initial-boundary-value problems plus trajectory checks,
//! * [`stefan`]  - a 1-D two-front free-boundary solver with
//!   spreading/vanishing classification and front-speed threshold search.
//!
//! Everything is deterministic: no randomness, no time-dependent state, and
//! fixed iteration orders, so identical inputs produce identical bytes.

pub mod grid;
pub mod ibvp;
pub mod kernel;
pub mod kinetics;
pub mod linalg;
pub mod spectral;
pub mod stefan;
