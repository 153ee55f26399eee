use rayon::prelude::*;

use super::{sum_in_order, Envelope, Phase, Responder, RoundLedger, Transport, TransportMode};
use crate::error::{DinoError, Result};

struct Pending {
    phase: Phase,
    iteration: u32,
    contributions: Vec<Vec<f64>>,
}

/// All workers live in this process; each broadcast runs the workers in
/// parallel on the rayon pool and parks their contributions for the reduce.
pub struct InProcessTransport<W> {
    workers: Vec<W>,
    pending: Option<Pending>,
    ledger: RoundLedger,
}

impl<W: Responder + Send> InProcessTransport<W> {
    pub fn new(workers: Vec<W>) -> Result<Self> {
        if workers.is_empty() {
            return Err(DinoError::Config("need at least one worker".into()));
        }
        Ok(InProcessTransport {
            workers,
            pending: None,
            ledger: RoundLedger::new(),
        })
    }

    pub fn worker_nodes(&self) -> &[W] {
        &self.workers
    }
}

impl<W: Responder + Send> Transport for InProcessTransport<W> {
    fn mode(&self) -> TransportMode {
        TransportMode::InProcess
    }

    fn workers(&self) -> usize {
        self.workers.len()
    }

    fn ledger(&self) -> &RoundLedger {
        &self.ledger
    }

    fn broadcast(&mut self, phase: Phase, iteration: u32, payload: &[f64]) -> Result<()> {
        if let Some(p) = &self.pending {
            return Err(DinoError::Protocol(format!(
                "broadcast of {} while {} contributions are unreduced",
                phase.name(),
                p.phase.name()
            )));
        }
        let envelope = Envelope::broadcast(phase, iteration, payload.to_vec());
        self.ledger
            .record(phase, self.workers.len() as u64 * envelope.payload_bytes());
        let contributions = self
            .workers
            .par_iter_mut()
            .map(|w| w.respond(&envelope))
            .collect::<Result<Vec<_>>>()?;
        self.pending = Some(Pending {
            phase,
            iteration,
            contributions,
        });
        Ok(())
    }

    fn reduce_sum(&mut self, phase: Phase, iteration: u32) -> Result<Vec<f64>> {
        let pending = self.pending.take().ok_or_else(|| {
            DinoError::Protocol(format!("reduce of {} without a broadcast", phase.name()))
        })?;
        if pending.phase != phase || pending.iteration != iteration {
            return Err(DinoError::Protocol(format!(
                "reduce of {}@{} but pending contributions are {}@{}",
                phase.name(),
                iteration,
                pending.phase.name(),
                pending.iteration
            )));
        }
        let sum = sum_in_order(&pending.contributions)?;
        let bytes: u64 = pending
            .contributions
            .iter()
            .map(|c| 8 * c.len() as u64)
            .sum();
        self.ledger.record(phase, bytes);
        Ok(sum)
    }

    fn shutdown(&mut self) -> Result<()> {
        self.pending = None;
        Ok(())
    }
}
