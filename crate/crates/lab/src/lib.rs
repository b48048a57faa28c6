//! Experiments, bound calculators, file formats and the command-line front
//! end for the `pyramid-oram` crate.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod stats;
pub mod traceio;
pub mod workload;

pub use error::{LabError, Result};
