//! Numerical laboratory for finite-time blow-up in semilinear filtration
//! problems u_t = ΔK(u) + λf(u) with Neumann, Robin, or Dirichlet boundary
//! conditions on an interval or a radially symmetric ball.
//!
//! The crate provides, end to end:
//!
//! - [`expr`]: parsing of the user-supplied nonlinearities with exact
//!   forward-mode derivatives up to third order;
//! - [`model`]: the problem bundle (K, f, λ, domain, boundary, u₀) and
//!   sampled verification of the standing positivity/convexity/Osgood
//!   assumptions;
//! - [`discretize`]: finite-difference Laplacians for the three boundary
//!   condition kinds and trapezoid-type quadrature;
//! - [`eigen`]: principal eigenpairs of the auxiliary Robin problem and of
//!   the eigenproblem linearized about a steady state;
//! - [`steady`]: damped-Newton steady solves, pseudo-arclength continuation
//!   and fold (λ*) location;
//! - [`evolve`]: adaptive semi-implicit time integration with blow-up
//!   detection and scalar functional tracking;
//! - [`certify`]: eigenfunction-method blow-up certificates (thresholds,
//!   optimal ε, T* bounds) and along-trajectory condition monitors;
//! - [`dichotomy`]: the constructive constants and two-regime minorization
//!   F_w(s) ≥ Λ·h(s) used by the above-steady-state blow-up monitor;
//! - [`cli`]: a batch experiment runner with reproducible artifacts.

// pub mod certify;
// pub mod cli;
// pub mod dichotomy;
pub mod discretize;
pub mod eigen;
// pub mod evolve;
pub mod expr;
pub mod model;
pub mod numerics;
pub mod steady;

pub use expr::{DerivativeBundle, Expression};
