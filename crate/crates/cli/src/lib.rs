//! Library side of the `consensus-bvp` binary: run configuration, artifact
//! formats, the experiment runner and the structural validator.

pub mod artifacts;
pub mod config;
mod failure;
pub mod run;
pub mod validate;

pub use failure::Failure;
