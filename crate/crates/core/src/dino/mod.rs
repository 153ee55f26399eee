//! The distributed Newton-type optimizer and its baseline.
//!
//! Each iteration costs six communication rounds: gradient broadcast and
//! reduce, direction broadcast and reduce, line-search broadcast and reduce.

mod direction;
mod driver;
mod hyper;
mod record;
mod sgd;
mod theory;
mod worker;

pub use direction::{aggregate_direction, descent_tolerance, local_direction, LocalDirection};
pub use driver::{dino_run, distributed_line_search, LineSearchOutcome, RunOptions};
pub use hyper::HyperParams;
pub use record::{IterationRecord, RunOutcome, RunStatus, SgdRecord};
pub use sgd::{sgd_baseline_run, SgdOutcome, SgdParams};
pub use theory::{
    check_pl_rate, compute_theory_constants, estimate_lipschitz, PlReport, PlViolation,
    TheoryConstants, LIPSCHITZ_FLOOR, LIPSCHITZ_SAFETY,
};
pub use worker::{WorkerNode, WorkerSettings, TELEMETRY_WIDTH};

/// Rounds charged to one full iteration.
pub const ROUNDS_PER_ITERATION: u64 = 6;
