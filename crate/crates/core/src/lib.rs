//! Provably total-variation-stable adaptive local timestepping for 1D
//! conservation laws, run as a discrete event simulation.
//!
//! - [`mesh`]: warped meshes and contiguous submesh partitions
//! - [`physics`]: Burgers and shallow water fluxes, Harten coefficients
//! - [`des`]: the event kernel and sequential executor
//! - [`lts`]: submesh actors implementing the timestepping algorithm
//! - [`parallel`]: optimistic multi-threaded executor with rollback
//! - [`verify`]: trace checkers and the live loop-invariant monitor
//! - [`perfmodel`]: work model, partitioner, rank assignment, speed-up estimates
//! - [`app`]: run configuration, problem setup and orchestration

// `!(x > 0.0)` style guards reject NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod des;
pub mod error;
pub mod lts;
pub mod mesh;
pub mod parallel;
pub mod perfmodel;
pub mod physics;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};
