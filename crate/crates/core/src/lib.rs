//! Exact evolution, functional-inequality constants and merging-time bounds for
//! time-inhomogeneous Markov chains driven by non-decreasing environments.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod environment;
pub mod error;
pub mod evolution;
pub mod functional;
pub mod io;
pub mod networks;
pub mod report;
pub mod spectral;

pub use environment::{normalize, Environment, Kernel, Measure, StateSpace, Tolerances};
pub use error::{Error, Result};
