//! Adaptive lowest-order edge-element solver for the H(curl) model problem
//!
//!   (curl u, curl v) + (u, v) = (f, v)   for all v in H_0(curl; Omega)
//!
//! on tetrahedral meshes produced by recursive bisection. The solver is a
//! local multigrid method: each refinement step spawns a virtual mesh level,
//! and a successive-subspace-correction sweep smooths only the degrees of
//! freedom created by that step, first along discrete gradient directions,
//! then along edge functions. Costs stay proportional to the number of new
//! unknowns, so deep local refinement toward edge singularities remains
//! cheap.
//!
//! Crate layout:
//! - [`mesh`]: bisection forest, conformity closure, virtual level extraction
//! - [`space`]: edge/nodal degrees of freedom, discrete gradients, dual bases
//! - [`assembly`]: element matrices and global systems
//! - [`transfer`]: inter-level prolongation operators
//! - [`solver`]: multigrid cycles, stationary and PCG drivers
//! - [`estimator`]: residual a posteriori estimator and maximum marking
//! - [`analysis`]: coloring, subspace-angle and uniformity diagnostics
//! - [`problems`]: built-in domains with known singular solutions
//! - [`adaptive`]: the solve-estimate-mark-refine driver used by the CLI

pub mod adaptive;
pub mod analysis;
pub mod assembly;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod solver;
pub mod space;
pub mod sparse;
pub mod transfer;
pub mod verify;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
