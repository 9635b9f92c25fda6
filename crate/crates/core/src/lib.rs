//! Discrete Minkowski problem on the sphere, and the construction of convex
//! bodies whose boundary is a surface of constant Gauss curvature `K = 1`
//! glued to finitely many flat discs.
//!
//! The crate is organized bottom-up:
//!
//! - [`sphere`]: unit vectors, caps and annuli, icosphere quadrature.
//! - [`profile`]: equilibrium weights and the singular curvature densities.
//! - [`polytope`]: realization of support vectors as convex polytopes.
//! - [`solver`]: the discrete Minkowski solver.
//! - [`pipeline`]: end-to-end construction and the geometric diagnostics.
//! - [`export`]: OBJ and JSON serialization of bodies.

pub mod error;
pub mod export;
mod hull;
pub mod pipeline;
pub mod polytope;
pub mod profile;
pub mod solver;
pub mod sphere;

pub use error::{Error, Result};
pub use hull::{convex_hull, Hull};
