//! Guaranteed error bounds for substructured 2D linear elasticity.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every algorithm of the
//! pipeline:
//!
//! - [`mesh`]: conforming P1 triangulations, uniform lattice refinement,
//!   grid partitions and star patches.
//! - [`fem`]: Hooke tensors, assembly, loads, the sequential direct solve and
//!   the analytic square benchmark.
//! - [`substructure`]: per-subdomain operators and the primal/dual interface
//!   assembly algebra.
//! - [`ddsolver`]: BDD and FETI projected preconditioned conjugate gradients
//!   (single and block right-hand sides, augmented/recycled) emitting the
//!   admissible field bundle at each iteration.
//! - [`recovery`]: flux-free star-patch equilibration per subdomain, giving a
//!   statically admissible stress and a continuous error estimate.
//! - [`bounds`]: upper/lower energy-norm bounds with separation of the
//!   algebraic and discretization errors, and goal-oriented intervals.
//!
//! Voigt convention throughout: strains are `(εxx, εyy, γxy)` with engineering
//! shear `γxy = 2εxy`, stresses are `(σxx, σyy, σxy)`, so `σ:ε` is the plain
//! dot product of the two 3-vectors.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod ddsolver;
mod error;
pub mod fem;
pub mod linalg;
pub(crate) mod math;
pub mod mesh;
pub mod quadrature;
pub mod recovery;
pub mod substructure;

pub use error::{Error, Result};
