//! Pseudospectral toolkit for the dipolar Gross-Pitaevskii equation
//! `i u_t + (1/2) Delta u = lambda1 |u|^2 u + lambda2 (K * |u|^2) u` on a
//! periodic box.

pub mod checkpoint;
pub mod error;
pub mod evolution;
pub mod field;
pub mod fit;
pub mod functionals;
pub mod grid;
pub mod ground_state;
pub mod kernel;
pub mod riesz_lab;
pub mod virial;

pub use error::{GpeError, Result};
pub use field::{Representation, SpectralField};
pub use grid::Grid3;
pub use kernel::{Axis, KernelTable, Symbol};
