//! Solver for a curvature flow on support functions of convex bodies.
//!
//! Given a positive prescription φ on the sphere and a degree 1 ≤ k ≤ n,
//! the flow deforms the support function s until the k-th elementary
//! symmetric polynomial of the principal radii satisfies p_k = γ φ for a
//! constant γ fixed by the initial data. The crate provides the sphere
//! discretization, curvature algebra, the time stepper, diagnostics, a
//! continuation driver for weakly admissible prescriptions, and a CLI.

pub mod config;
pub mod continuation;
pub mod convexity;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod grid;
pub mod io;
pub mod testdata;

pub use error::{Error, Result};
