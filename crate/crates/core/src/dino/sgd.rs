use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::direction::mean_in_order;
use super::{RunStatus, SgdRecord};
use crate::comm::{Phase, RoundLedger, Transport};
use crate::error::{DinoError, Result};
use crate::linops::ParameterVector;
use crate::vector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdParams {
    pub lr: f64,
    pub max_iters: usize,
    /// Abort once `f > divergence_factor * f(w0)`.
    pub divergence_factor: f64,
}

impl Default for SgdParams {
    fn default() -> Self {
        SgdParams {
            lr: 1e-2,
            max_iters: 1000,
            divergence_factor: 1e10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SgdOutcome {
    pub w: Vec<f64>,
    pub records: Vec<SgdRecord>,
    pub status: RunStatus,
    pub ledger: RoundLedger,
}

/// Distributed minibatch SGD with a constant step size. Each iteration is
/// one broadcast of `w` and one reduce of `[g_hat_i, f_i(w)]`.
pub fn sgd_baseline_run<T: Transport + ?Sized>(
    transport: &mut T,
    w0: &ParameterVector,
    params: &SgdParams,
) -> Result<SgdOutcome> {
    if !(params.lr > 0.0 && params.lr.is_finite()) {
        return Err(DinoError::Config(format!(
            "lr must be positive, got {}",
            params.lr
        )));
    }
    let m = transport.workers();
    let d = w0.dim();
    let mut w = w0.as_slice().to_vec();
    let mut records = Vec::new();
    let mut status = RunStatus::MaxIters;
    let mut f0 = None;
    for t in 0..params.max_iters {
        let it = t as u32;
        transport.broadcast(Phase::Sgd, it, &w)?;
        let sum = transport.reduce_sum(Phase::Sgd, it)?;
        crate::error::check_dim(d + 1, sum.len())?;
        let mean = mean_in_order(&sum, m);
        let (g, f) = (&mean[..d], mean[d]);
        let f_ref = *f0.get_or_insert(f);
        records.push(SgdRecord {
            t,
            f,
            grad_norm: vector::norm(g),
            rounds_so_far: transport.ledger().algorithm_rounds(),
            bytes_so_far: transport.ledger().bytes_sent(),
        });
        if !f.is_finite() || f > params.divergence_factor * f_ref.abs().max(f64::MIN_POSITIVE) {
            warn!(
                "sgd with lr = {} diverged at iteration {t} (f = {f:e})",
                params.lr
            );
            status = RunStatus::Diverged;
            break;
        }
        vector::axpy(-params.lr, g, &mut w);
    }
    info!(
        "sgd lr = {}: {:?} after {} iterations",
        params.lr,
        status,
        records.len()
    );
    Ok(SgdOutcome {
        w,
        records,
        status,
        ledger: transport.ledger().clone(),
    })
}
