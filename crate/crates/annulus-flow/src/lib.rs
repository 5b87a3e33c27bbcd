//! Incompressible 2D flow on an annulus with permeable walls.
//!
//! The solver works in vorticity form. The velocity is reconstructed from the
//! vorticity through the decomposition
//!
//! ```text
//! v = grad_perp(h_nu) + lambda * u_1 + grad(h_a)
//! ```
//!
//! where `h_nu` solves a Dirichlet Poisson problem for the vorticity, `u_1` is
//! the harmonic circulation field of the annulus and `h_a` is the Neumann
//! potential carrying the prescribed wall flux `v . n = a`. The vorticity is
//! advanced by conservative upwind advection plus implicit diffusion, with the
//! boundary vorticity `b` imposed everywhere for `nu > 0` and only on the
//! inflow part of the wall for the Euler case `nu = 0`.
//!
//! The crate ships a sweep harness (`harness` module and the `annulus-flow`
//! binary) that runs the same data across a list of viscosities and evaluates
//! the diagnostics witnessing the inviscid limit: energy inequality, uniform
//! vorticity bounds, boundary-layer flux and the weak formulation residual of
//! the limiting Euler solution.

pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod evolution;
pub mod field;
pub mod geometry;
pub mod harness;
pub mod velocity;

pub use error::FlowError;
pub use field::{ScalarField, VectorField};
pub use geometry::{BoundaryData, BoundarySide, Grid, RegionLabel};
pub use velocity::{FlowState, HarmonicBasis};
