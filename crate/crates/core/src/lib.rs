//! Stochastic representations of open quantum dynamics: bath correlation
//! kernels, their Mercer/RKHS structure, Gaussian trajectory sampling, exact
//! Jaynes-Cummings pure states and a truncated-Fock reference solver.

pub mod bath;
pub mod cli;
pub mod error;
pub mod grid;
pub mod jc;
pub mod linalg;
pub mod mercer;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod scenario;
pub mod stats;
pub mod suite;
pub mod unravel;

pub use error::{Error, Result};
pub use grid::TimeGrid;
