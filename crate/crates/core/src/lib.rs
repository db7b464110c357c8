//! Nonlocal p-Laplacian Dirichlet problems in one dimension: kernels,
//! coefficients, pair quadrature, the nonlocal calculus, a convex solver and
//! homogenization experiments.

pub mod cli;
pub mod coefficients;
pub mod config;
pub mod error;
pub mod experiments;
pub mod forms;
pub mod kernels;
pub mod mesh;
pub mod numeric;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
