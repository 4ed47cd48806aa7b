//! Simulated quantum annealing for transverse-field Ising models: the
//! Suzuki-Trotter lattice, annealing schedules, the heat-bath generator and
//! its spectral bounds, exact master-equation evolution and a Monte Carlo
//! sampler.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod evolve;
pub mod generator;
pub mod lattice;
pub mod mcmc;
pub mod numeric;
pub mod schedule;

pub use error::{Result, SqaError};
