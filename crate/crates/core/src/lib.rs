//! Capacity expansion planning for power grids: generation, storage and
//! transmission investments co-optimized against hourly operations with n-1
//! transmission security.
//!
//! The pieces, bottom up:
//!
//! - [`network`]: the grid, impedance feedback, PTDF and LODF.
//! - [`cycles`]: cycle bases for the sparse KVL formulation.
//! - [`solver`]: LP/MIP engine adapter.
//! - [`subproblem`]: per-scenario operations LP, subgradients and
//!   contingency screening.
//! - [`bundle`]: the level-bundle master with analytic-center iterates.
//! - [`correction`]: restricted transmission re-expansion and its fixed-point
//!   loop.
//! - [`io`], [`config`], [`generate`], [`report`], [`pipeline`]: files and
//!   end-to-end runs.

pub mod bundle;
pub mod config;
pub mod correction;
pub mod cycles;
pub mod error;
pub mod extensive;
pub mod generate;
pub mod io;
pub mod model;
pub mod network;
pub mod pipeline;
pub mod report;
pub mod solver;
pub mod subproblem;

pub use error::{Error, Result};
