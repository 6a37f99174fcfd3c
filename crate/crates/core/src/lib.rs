//! Conforming finite elements for the 2D Helmholtz equation with mixed
//! Dirichlet/impedance boundaries, an equilibrated-flux a posteriori error
//! estimator with computable reliability constants, and an estimator-driven
//! adaptive refinement loop.
//!
//! The pipeline is: [`mesh`] → [`solver::solve_helmholtz`] →
//! [`equilibration::equilibrate`] → [`estimator::report`], with
//! [`bounds`] supplying the guaranteed constants and [`adaptivity`] closing
//! the loop.

pub mod adaptivity;
pub mod bounds;
pub mod cli;
pub mod equilibration;
pub mod error;
pub mod estimator;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod spaces;

pub use error::{Error, Result};

/// Complex scalar used for all fields.
pub type C64 = num_complex::Complex64;

/// A point (or vector) in the plane.
pub type Point = [f64; 2];
