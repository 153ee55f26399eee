use std::collections::BTreeMap;

use serde::Serialize;

use super::Phase;

/// Communication-round and byte accounting.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RoundLedger {
    rounds: u64,
    bytes_sent: u64,
    per_phase: BTreeMap<Phase, u64>,
}

impl RoundLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Charge one round (a broadcast or a reduce) moving `bytes` of payload.
    pub fn record(&mut self, phase: Phase, bytes: u64) {
        debug_assert!(!phase.is_control());
        self.rounds += 1;
        self.bytes_sent += bytes;
        *self.per_phase.entry(phase).or_insert(0) += 1;
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn phase_rounds(&self, phase: Phase) -> u64 {
        self.per_phase.get(&phase).copied().unwrap_or(0)
    }

    pub fn per_phase(&self) -> &BTreeMap<Phase, u64> {
        &self.per_phase
    }

    /// Rounds spent by the optimizer itself, excluding setup probes.
    pub fn algorithm_rounds(&self) -> u64 {
        self.rounds - self.phase_rounds(Phase::Setup)
    }
}
