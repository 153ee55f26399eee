//! Driver/worker message passing.
//!
//! The driver talks to its `m` workers only through two collective
//! operations: a broadcast of one payload to every worker, and a reduce that
//! sums one contribution per worker. Each is one communication round. Every
//! broadcast is answered by exactly one contribution per worker, which the
//! next reduce on the same phase collects.

mod envelope;
mod inprocess;
mod ledger;
mod socket;

pub use envelope::{Envelope, EnvelopeKind, Phase, DRIVER_ID, HEADER_LEN, MAX_PAYLOAD};
pub use inprocess::InProcessTransport;
pub use ledger::RoundLedger;
pub use socket::{run_socket_worker, SocketListener, SocketTransport};

use serde::{Deserialize, Serialize};

use crate::error::{DinoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    InProcess,
    Socket,
}

/// Worker-side logic: answers each broadcast with a contribution vector.
pub trait Responder {
    fn respond(&mut self, envelope: &Envelope) -> Result<Vec<f64>>;
}

/// Driver-side view of the collective operations.
pub trait Transport {
    fn mode(&self) -> TransportMode;
    fn workers(&self) -> usize;
    fn ledger(&self) -> &RoundLedger;
    fn broadcast(&mut self, phase: Phase, iteration: u32, payload: &[f64]) -> Result<()>;
    /// Element-wise sum of the contributions answering the last broadcast,
    /// accumulated in ascending worker id order.
    fn reduce_sum(&mut self, phase: Phase, iteration: u32) -> Result<Vec<f64>>;
    /// Tell workers to exit. Not a communication round.
    fn shutdown(&mut self) -> Result<()>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn mode(&self) -> TransportMode {
        (**self).mode()
    }
    fn workers(&self) -> usize {
        (**self).workers()
    }
    fn ledger(&self) -> &RoundLedger {
        (**self).ledger()
    }
    fn broadcast(&mut self, phase: Phase, iteration: u32, payload: &[f64]) -> Result<()> {
        (**self).broadcast(phase, iteration, payload)
    }
    fn reduce_sum(&mut self, phase: Phase, iteration: u32) -> Result<Vec<f64>> {
        (**self).reduce_sum(phase, iteration)
    }
    fn shutdown(&mut self) -> Result<()> {
        (**self).shutdown()
    }
}

/// Reduce of per-candidate scalars; the same collective as [`Transport::reduce_sum`].
pub fn reduce_scalar_vector<T: Transport + ?Sized>(
    transport: &mut T,
    phase: Phase,
    iteration: u32,
) -> Result<Vec<f64>> {
    transport.reduce_sum(phase, iteration)
}

/// Fixed-order element-wise sum; all contributions must have equal length.
pub fn sum_in_order(contributions: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = contributions
        .first()
        .ok_or_else(|| DinoError::Protocol("reduce with no contributions".into()))?;
    let mut out = first.clone();
    for (id, c) in contributions.iter().enumerate().skip(1) {
        if c.len() != out.len() {
            return Err(DinoError::Protocol(format!(
                "worker {id} contributed {} values, worker 0 contributed {}",
                c.len(),
                out.len()
            )));
        }
        for (o, x) in out.iter_mut().zip(c) {
            *o += x;
        }
    }
    Ok(out)
}
