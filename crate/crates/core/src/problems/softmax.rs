use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{Dataset, Objective, Shard};
use crate::error::{DinoError, Result};
use crate::vector;

/// ℓ2-regularized multinomial logistic regression on one shard.
///
/// Parameters are the full `classes x features` weight matrix flattened
/// class-major: `w[c * features + k]`.
#[derive(Debug, Clone)]
pub struct SoftmaxModel {
    data: Arc<Dataset>,
    shard: Shard,
    classes: usize,
    gamma: f64,
    scale: f64,
}

impl SoftmaxModel {
    /// `workers` is the total shard count `m`; the sample sum is scaled by
    /// `m / n` so the mean of the local objectives is the dataset mean.
    pub fn new(data: Arc<Dataset>, shard: Shard, workers: usize, gamma: f64) -> Result<Self> {
        let classes = data
            .class_count()
            .ok_or_else(|| DinoError::Config("softmax model needs class labels".into()))?;
        if shard.is_empty() {
            return Err(DinoError::Config("empty shard".into()));
        }
        if let Some(&bad) = shard.indices.iter().find(|&&j| j >= data.len()) {
            return Err(DinoError::Config(format!("shard index {bad} out of range")));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(DinoError::Config(format!(
                "regularization must be >= 0, got {gamma}"
            )));
        }
        let scale = workers as f64 * shard.weight / shard.len() as f64;
        Ok(SoftmaxModel {
            data,
            shard,
            classes,
            gamma,
            scale,
        })
    }

    pub fn shard(&self) -> &Shard {
        &self.shard
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn regularization(&self) -> f64 {
        self.gamma
    }

    pub fn checksum(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(b"softmax");
        h.update((self.classes as u64).to_le_bytes());
        h.update(self.gamma.to_le_bytes());
        self.data.hash_rows(&self.shard.indices, &mut h);
        u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
    }

    /// Class probabilities and log-partition for one sample.
    fn probabilities(&self, w: &[f64], x: &[f64], p: &mut [f64]) -> f64 {
        let dx = x.len();
        for (c, pc) in p.iter_mut().enumerate() {
            *pc = vector::dot(&w[c * dx..(c + 1) * dx], x);
        }
        let zmax = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for pc in p.iter_mut() {
            *pc = (*pc - zmax).exp();
            sum += *pc;
        }
        for pc in p.iter_mut() {
            *pc /= sum;
        }
        zmax + sum.ln()
    }

    /// Unregularized, unscaled loss sum and gradient over `rows`.
    fn accumulate(
        &self,
        w: &[f64],
        rows: impl Iterator<Item = usize>,
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let dx = self.data.features();
        let mut p = vec![0.0; self.classes];
        let mut f = 0.0;
        let mut grad = grad;
        for j in rows {
            let x = self.data.row(j);
            let y = self.data.class_label(j);
            let lse = self.probabilities(w, x, &mut p);
            let zy = vector::dot(&w[y * dx..(y + 1) * dx], x);
            f += lse - zy;
            if let Some(g) = grad.as_deref_mut() {
                for (c, &pc) in p.iter().enumerate() {
                    let coef = pc - if c == y { 1.0 } else { 0.0 };
                    vector::axpy(coef, x, &mut g[c * dx..(c + 1) * dx]);
                }
            }
        }
        f
    }
}

impl Objective for SoftmaxModel {
    fn name(&self) -> &'static str {
        "softmax"
    }

    fn dim(&self) -> usize {
        self.classes * self.data.features()
    }

    fn value(&self, w: &[f64]) -> f64 {
        let f = self.accumulate(w, self.shard.indices.iter().copied(), None);
        self.scale * f + self.gamma * vector::norm_sq(w)
    }

    fn value_and_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; self.dim()];
        let f = self.accumulate(w, self.shard.indices.iter().copied(), Some(&mut g));
        vector::scale(self.scale, &mut g);
        vector::axpy(2.0 * self.gamma, w, &mut g);
        (self.scale * f + self.gamma * vector::norm_sq(w), g)
    }

    fn hvp(&self, w: &[f64], v: &[f64]) -> Vec<f64> {
        let dx = self.data.features();
        let mut out = vec![0.0; self.dim()];
        let mut p = vec![0.0; self.classes];
        let mut u = vec![0.0; self.classes];
        for &j in &self.shard.indices {
            let x = self.data.row(j);
            self.probabilities(w, x, &mut p);
            for (c, uc) in u.iter_mut().enumerate() {
                *uc = vector::dot(&v[c * dx..(c + 1) * dx], x);
            }
            let pu = vector::dot(&p, &u);
            for c in 0..self.classes {
                let s = p[c] * (u[c] - pu);
                vector::axpy(s, x, &mut out[c * dx..(c + 1) * dx]);
            }
        }
        vector::scale(self.scale, &mut out);
        vector::axpy(2.0 * self.gamma, v, &mut out);
        out
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn sample_count(&self) -> usize {
        self.shard.len()
    }

    fn minibatch_gradient(&self, w: &[f64], batch: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        if !batch.is_empty() {
            let rows = batch.iter().map(|&pos| self.shard.indices[pos]);
            self.accumulate(w, rows, Some(&mut g));
            let s = self.scale * self.shard.len() as f64 / batch.len() as f64;
            vector::scale(s, &mut g);
        }
        vector::axpy(2.0 * self.gamma, w, &mut g);
        g
    }
}
