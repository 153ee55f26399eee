//! Distributed Newton-type optimization over a driver/worker message layer.
//!
//! The crate is split into the layers the optimizer is built from:
//!
//! * [`linops`]: matrix-free Hessian and damped least-squares operators.
//! * [`solvers`]: LSMR and CG sub-problem solvers with residual certificates.
//! * [`problems`]: loss models, datasets and shard partitioning.
//! * [`comm`]: broadcast/reduce transports with exact round accounting.
//! * [`dino`]: the driver loop, worker direction logic, line search,
//!   decrease-guarantee constants and the synchronous SGD baseline.

pub mod comm;
pub mod dino;
pub mod error;
pub mod linops;
pub mod problems;
pub mod solvers;
pub mod vector;

pub use error::{DinoError, Result};
