use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{DinoError, Result};

/// Wire header: tag, iteration, worker id, payload length; little-endian.
pub const HEADER_LEN: usize = 16;
pub const DRIVER_ID: i32 = -1;
/// Upper bound on reals per frame, rejects corrupt length fields.
pub const MAX_PAYLOAD: u32 = 1 << 27;

/// Protocol phase; the numeric value is the wire tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Hello,
    HelloAck,
    Shutdown,
    Setup,
    Grad,
    Direction,
    LineSearch,
    Sgd,
}

impl Phase {
    pub fn tag(self) -> u32 {
        match self {
            Phase::Hello => 1,
            Phase::HelloAck => 2,
            Phase::Shutdown => 3,
            Phase::Setup => 10,
            Phase::Grad => 20,
            Phase::Direction => 30,
            Phase::LineSearch => 40,
            Phase::Sgd => 50,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Phase> {
        Ok(match tag {
            1 => Phase::Hello,
            2 => Phase::HelloAck,
            3 => Phase::Shutdown,
            10 => Phase::Setup,
            20 => Phase::Grad,
            30 => Phase::Direction,
            40 => Phase::LineSearch,
            50 => Phase::Sgd,
            other => return Err(DinoError::Protocol(format!("unknown tag {other}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Hello => "hello",
            Phase::HelloAck => "hello_ack",
            Phase::Shutdown => "shutdown",
            Phase::Setup => "setup",
            Phase::Grad => "grad",
            Phase::Direction => "direction",
            Phase::LineSearch => "linesearch",
            Phase::Sgd => "sgd",
        }
    }

    /// Handshake and shutdown frames are not communication rounds.
    pub fn is_control(self) -> bool {
        matches!(self, Phase::Hello | Phase::HelloAck | Phase::Shutdown)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeKind {
    Broadcast,
    ReduceContribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub kind: EnvelopeKind,
    pub phase: Phase,
    pub iteration: u32,
    pub worker_id: i32,
    pub payload: Vec<f64>,
}

impl Envelope {
    pub fn broadcast(phase: Phase, iteration: u32, payload: Vec<f64>) -> Self {
        Envelope {
            kind: EnvelopeKind::Broadcast,
            phase,
            iteration,
            worker_id: DRIVER_ID,
            payload,
        }
    }

    pub fn contribution(phase: Phase, iteration: u32, worker_id: i32, payload: Vec<f64>) -> Self {
        Envelope {
            kind: EnvelopeKind::ReduceContribution,
            phase,
            iteration,
            worker_id,
            payload,
        }
    }

    /// Payload size in bytes, the quantity charged to the round ledger.
    pub fn payload_bytes(&self) -> u64 {
        8 * self.payload.len() as u64
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + 8 * self.payload.len());
        buf.extend_from_slice(&self.phase.tag().to_le_bytes());
        buf.extend_from_slice(&self.iteration.to_le_bytes());
        buf.extend_from_slice(&self.worker_id.to_le_bytes());
        buf.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        for v in &self.payload {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }

    /// Read one frame. The kind is not on the wire; the caller knows which
    /// direction the stream carries.
    pub fn read_from(r: &mut impl Read, kind: EnvelopeKind) -> Result<Envelope> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        let word =
            |i: usize| u32::from_le_bytes(header[4 * i..4 * i + 4].try_into().expect("4 bytes"));
        let phase = Phase::from_tag(word(0))?;
        let iteration = word(1);
        let worker_id = word(2) as i32;
        let len = word(3);
        if len > MAX_PAYLOAD {
            return Err(DinoError::Protocol(format!(
                "payload length {len} exceeds limit"
            )));
        }
        let mut bytes = vec![0u8; 8 * len as usize];
        r.read_exact(&mut bytes)?;
        let payload = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Envelope {
            kind,
            phase,
            iteration,
            worker_id,
            payload,
        })
    }
}
