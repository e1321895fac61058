//! Consensus averaging on graphs where some nodes never update.
//!
//! Nodes are split into *boundary* nodes, whose values stay fixed, and
//! *internal* nodes, which repeatedly average themselves with their
//! neighbours. With at least one boundary node reachable from every internal
//! node the network does not reach consensus in general; it settles on the
//! harmonic extension of the boundary values,
//! `x_i = (I - P_i)^-1 P_e x_b`, independent of the internal start values.
//!
//! The crate provides:
//!
//! * [`graph`]: topology with the boundary/internal split and structural checks.
//! * [`linalg`]: the block system matrix, spectral-radius estimate and the
//!   closed-form limit (direct LU solve or a Neumann series).
//! * [`dynamics`]: synchronous iteration, trajectories and convergence detection.
//! * [`gossip`]: sensor-polling and pairwise randomized models, their expected
//!   matrices and Monte Carlo estimates of the mean path.
//! * [`periodic`]: boundary values that repeat with a fixed period and the
//!   limiting periodic orbit.
//! * [`scenarios`]: the malicious-node detection attack and advertiser steering.
//!
//! Node indices are zero-based with boundary nodes first: `0..K` are boundary
//! nodes and `K..K+M` are internal nodes.
//!
//! Independent replications and trials run on rayon when the default
//! `parallel` feature is enabled; see [`Execution`].

pub mod dynamics;
mod error;
mod exec;
pub mod format;
pub mod gossip;
pub mod graph;
pub mod linalg;
pub mod matrix;
pub mod periodic;
pub mod scenarios;
pub mod seed;

pub use error::{Error, Result};
pub use exec::Execution;
pub use graph::{Graph, NodeId, NodeLabels};
pub use linalg::{LimitResult, Solver, StateVector, SystemMatrix};
pub use matrix::Matrix;

/// Tolerance used when validating freshly constructed stochastic matrices.
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// Tolerance for solver residuals and fixed-point checks.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Agreement required between an iterated state and the closed form.
pub const ITERATION_TOL: f64 = 1e-8;
/// Pivots smaller than this in magnitude are treated as singular.
pub const PIVOT_TOL: f64 = 1e-13;
