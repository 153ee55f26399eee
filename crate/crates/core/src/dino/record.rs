use serde::{Deserialize, Serialize};

use crate::comm::RoundLedger;

/// Telemetry for one optimizer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub f_before: f64,
    pub f_after: f64,
    pub grad_norm: f64,
    pub alpha: f64,
    /// No grid step passed the Armijo test; the smallest was taken.
    pub line_search_exhausted: bool,
    /// `<p_t, g_t>`.
    pub descent_dot: f64,
    /// Number of workers whose direction needed the correction term.
    pub i_t_size: usize,
    pub degenerate_rhs: usize,
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
    pub lambda_max: f64,
    /// Algorithm rounds completed, setup excluded.
    pub rounds_so_far: u64,
    pub bytes_so_far: u64,
    pub tau: Option<f64>,
    pub a: Option<f64>,
    pub theory_usable: Option<bool>,
    /// `tau rho theta |g|²`, when the constants are usable.
    pub decrease_bound: Option<f64>,
    pub gap_before: Option<f64>,
    pub gap_after: Option<f64>,
}

impl IterationRecord {
    pub fn decrease(&self) -> f64 {
        self.f_before - self.f_after
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Gradient norm fell to the tolerance.
    Converged,
    MaxIters,
    /// Objective blew past the divergence threshold.
    Diverged,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub w: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    /// Objective at the returned iterate, if it was evaluated.
    pub final_f: Option<f64>,
    /// Gradient norm at the last point where a gradient was computed.
    pub last_grad_norm: Option<f64>,
    pub lipschitz: Option<Vec<f64>>,
    pub ledger: RoundLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdRecord {
    pub t: usize,
    /// Full objective at the iterate the step started from.
    pub f: f64,
    pub grad_norm: f64,
    pub rounds_so_far: u64,
    pub bytes_so_far: u64,
}
