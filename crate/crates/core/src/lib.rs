//! Steady compressible Navier–Stokes flow in a finite channel near a
//! Poiseuille–Couette shear profile: background fields, boundary-layer
//! homogenization, the linearized solver, the Picard iteration for the
//! nonlinear remainder, a priori estimate audits and a sweep harness.

pub mod background;
pub mod elliptic;
pub mod error;
pub mod estimates;
pub mod expr;
pub mod grid;
pub mod harness;
pub mod homogenize;
pub mod linsolve;
pub mod norms;
pub mod picard;
pub mod selftest;
pub mod sparse;

pub use error::{Error, Result};
