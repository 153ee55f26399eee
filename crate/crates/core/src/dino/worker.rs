use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{estimate_lipschitz, local_direction, HyperParams};
use crate::comm::{Envelope, Phase, Responder};
use crate::error::{check_dim, DinoError, Result};
use crate::problems::Objective;
use crate::solvers::{achieved_epsilons, SolverConfig};
use crate::vector;

/// Per-worker slots appended to a direction contribution: enforced flag,
/// eps1, eps2, lambda, degenerate flag. Worker `i` fills only its own slot,
/// so the reduce sum carries every worker's telemetry.
pub const TELEMETRY_WIDTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkerSettings {
    pub hp: HyperParams,
    pub solver: SolverConfig,
    /// Fraction of the shard drawn per stochastic gradient.
    pub batch_fraction: f64,
    pub seed: u64,
}

impl Default for WorkerSettings {
    fn default() -> Self {
        WorkerSettings {
            hp: HyperParams::default(),
            solver: SolverConfig::default(),
            batch_fraction: 0.2,
            seed: 0,
        }
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut x =
        seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 31;
    x.wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// One worker: a local objective plus the state kept between phases.
pub struct WorkerNode<M> {
    id: usize,
    workers: usize,
    model: M,
    settings: WorkerSettings,
    w: Option<Vec<f64>>,
}

impl<M: Objective> WorkerNode<M> {
    pub fn new(id: usize, workers: usize, model: M, settings: WorkerSettings) -> Result<Self> {
        if id >= workers {
            return Err(DinoError::Config(format!(
                "worker id {id} out of range for {workers} workers"
            )));
        }
        settings.hp.validate()?;
        settings.solver.validate()?;
        if !(settings.batch_fraction > 0.0 && settings.batch_fraction <= 1.0) {
            return Err(DinoError::Config(format!(
                "batch_fraction must lie in (0, 1], got {}",
                settings.batch_fraction
            )));
        }
        Ok(WorkerNode {
            id,
            workers,
            model,
            settings,
            w: None,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    fn slot(&self, width: usize) -> Vec<f64> {
        vec![0.0; self.workers * width]
    }

    fn setup(&mut self, payload: &[f64]) -> Result<Vec<f64>> {
        let d = self.model.dim();
        check_dim(d + 2, payload.len())?;
        let probes = payload[d] as usize;
        let seed = mix(payload[d + 1].to_bits(), self.id as u64, 0);
        let l = estimate_lipschitz(&self.model, &payload[..d], probes, seed)?;
        let mut out = self.slot(1);
        out[self.id] = l;
        Ok(out)
    }

    fn grad(&mut self, payload: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.model.dim(), payload.len())?;
        let (f, mut g) = self.model.value_and_gradient(payload);
        if !f.is_finite() || !vector::all_finite(&g) {
            return Err(DinoError::non_finite(format!(
                "local gradient on worker {} ({} model)",
                self.id,
                self.model.name()
            )));
        }
        self.w = Some(payload.to_vec());
        g.push(f);
        Ok(g)
    }

    fn direction(&mut self, payload: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.model.dim(), payload.len())?;
        let w = self
            .w
            .as_ref()
            .ok_or_else(|| DinoError::Protocol("direction requested before gradient".into()))?;
        let hp = self.settings.hp;
        let ld = local_direction(&self.model, w, payload, &hp, &self.settings.solver)?;
        let (eps1, eps2) = achieved_epsilons(&ld.certs);
        let mut out = ld.p;
        let mut tel = self.slot(TELEMETRY_WIDTH);
        let s = &mut tel[self.id * TELEMETRY_WIDTH..(self.id + 1) * TELEMETRY_WIDTH];
        s[0] = if ld.enforced { 1.0 } else { 0.0 };
        s[1] = eps1;
        s[2] = eps2;
        s[3] = ld.lambda;
        s[4] = if ld.certs.degenerate_rhs { 1.0 } else { 0.0 };
        out.extend_from_slice(&tel);
        Ok(out)
    }

    fn line_search(&mut self, payload: &[f64]) -> Result<Vec<f64>> {
        let d = self.model.dim();
        if payload.len() != 2 * d + 1 {
            return Err(DinoError::DimensionMismatch {
                expected: 2 * d + 1,
                got: payload.len(),
            });
        }
        let (w, rest) = payload.split_at(d);
        let (p, depth) = rest.split_at(d);
        let depth = depth[0] as u32;
        let mut out = Vec::with_capacity(depth as usize + 2);
        out.push(self.model.value(w));
        let mut trial = vec![0.0; d];
        for k in 0..=depth {
            let alpha = (-(k as f64)).exp2();
            for ((t, wi), pi) in trial.iter_mut().zip(w).zip(p) {
                *t = wi + alpha * pi;
            }
            // Overflowing trial values simply fail the Armijo test.
            out.push(self.model.value(&trial));
        }
        Ok(out)
    }

    fn sgd(&mut self, iteration: u32, payload: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.model.dim(), payload.len())?;
        let n = self.model.sample_count();
        let mut g = if n == 0 {
            self.model.gradient(payload)
        } else {
            let b = ((self.settings.batch_fraction * n as f64).round() as usize).clamp(1, n);
            let mut rng = ChaCha8Rng::seed_from_u64(mix(
                self.settings.seed,
                self.id as u64 + 1,
                iteration as u64,
            ));
            let batch = rand::seq::index::sample(&mut rng, n, b).into_vec();
            self.model.minibatch_gradient(payload, &batch)
        };
        let f = self.model.value(payload);
        if !vector::all_finite(&g) {
            return Err(DinoError::non_finite(format!(
                "stochastic gradient on worker {}",
                self.id
            )));
        }
        g.push(f);
        Ok(g)
    }
}

impl<M: Objective> Responder for WorkerNode<M> {
    fn respond(&mut self, envelope: &Envelope) -> Result<Vec<f64>> {
        let payload = &envelope.payload;
        match envelope.phase {
            Phase::Setup => self.setup(payload),
            Phase::Grad => self.grad(payload),
            Phase::Direction => self.direction(payload),
            Phase::LineSearch => self.line_search(payload),
            Phase::Sgd => self.sgd(envelope.iteration, payload),
            other => Err(DinoError::Protocol(format!(
                "worker {} cannot answer a {} frame",
                self.id,
                other.name()
            ))),
        }
    }
}
