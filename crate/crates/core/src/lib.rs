//! Cell-centred finite-volume elastodynamics.
//!
//! Multi-point stress approximation (MPSA) in space, Newmark in time, with
//! Dirichlet, Neumann, Robin and first-order absorbing boundaries, plus the
//! verification tooling (manufactured solutions, error norms, convergence
//! rates, energy) and a scenario runner.

pub mod error;
pub mod linear_system;
pub mod material;
pub mod mesh;
pub mod mpsa;
pub mod par;
pub mod sparse;
pub mod scenario;
pub mod timestepper;
pub mod verification;

pub use error::{Error, Result};
