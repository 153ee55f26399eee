use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{sigmoid, softplus, Dataset, Objective, Shard};
use crate::error::{DinoError, Result};
use crate::vector;

/// Non-convex least squares through a softplus link:
/// `ℓ_j(w) = (y_j - log(1 + exp<w, x_j>))²`, no regularization.
#[derive(Debug, Clone)]
pub struct NllsModel {
    data: Arc<Dataset>,
    shard: Shard,
    scale: f64,
}

impl NllsModel {
    pub fn new(data: Arc<Dataset>, shard: Shard, workers: usize) -> Result<Self> {
        if shard.is_empty() {
            return Err(DinoError::Config("empty shard".into()));
        }
        if let Some(&bad) = shard.indices.iter().find(|&&j| j >= data.len()) {
            return Err(DinoError::Config(format!("shard index {bad} out of range")));
        }
        let scale = workers as f64 * shard.weight / shard.len() as f64;
        Ok(NllsModel { data, shard, scale })
    }

    pub fn shard(&self) -> &Shard {
        &self.shard
    }

    pub fn checksum(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(b"nlls");
        self.data.hash_rows(&self.shard.indices, &mut h);
        u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
    }

    fn accumulate(
        &self,
        w: &[f64],
        rows: impl Iterator<Item = usize>,
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let mut f = 0.0;
        let mut grad = grad;
        for j in rows {
            let x = self.data.row(j);
            let z = vector::dot(w, x);
            let r = self.data.real_label(j) - softplus(z);
            f += r * r;
            if let Some(g) = grad.as_deref_mut() {
                vector::axpy(-2.0 * r * sigmoid(z), x, g);
            }
        }
        f
    }
}

impl Objective for NllsModel {
    fn name(&self) -> &'static str {
        "nonlinear-least-squares"
    }

    fn dim(&self) -> usize {
        self.data.features()
    }

    fn value(&self, w: &[f64]) -> f64 {
        self.scale * self.accumulate(w, self.shard.indices.iter().copied(), None)
    }

    fn value_and_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; self.dim()];
        let f = self.accumulate(w, self.shard.indices.iter().copied(), Some(&mut g));
        vector::scale(self.scale, &mut g);
        (self.scale * f, g)
    }

    fn hvp(&self, w: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for &j in &self.shard.indices {
            let x = self.data.row(j);
            let z = vector::dot(w, x);
            let s = sigmoid(z);
            let r = self.data.real_label(j) - softplus(z);
            // d²ℓ/dz² = 2σ² - 2rσ(1-σ); the second term makes the model non-convex.
            let curvature = 2.0 * s * s - 2.0 * r * s * (1.0 - s);
            vector::axpy(curvature * vector::dot(x, v), x, &mut out);
        }
        vector::scale(self.scale, &mut out);
        out
    }

    fn is_convex(&self) -> bool {
        false
    }

    fn sample_count(&self) -> usize {
        self.shard.len()
    }

    fn minibatch_gradient(&self, w: &[f64], batch: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        if !batch.is_empty() {
            let rows = batch.iter().map(|&pos| self.shard.indices[pos]);
            self.accumulate(w, rows, Some(&mut g));
            vector::scale(
                self.scale * self.shard.len() as f64 / batch.len() as f64,
                &mut g,
            );
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::testing::{fd_gradient, fd_hvp, rel_err};
    use crate::problems::{generate_classification, Labels};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full_shard(n: usize) -> Shard {
        Shard {
            indices: (0..n).collect(),
            weight: 1.0,
        }
    }

    #[test]
    fn origin_predicts_log_two() {
        let data = generate_classification(12, 4, 3, 1.0, 1)
            .unwrap()
            .with_real_labels();
        let expected: f64 = (0..12)
            .map(|j| (data.real_label(j) - 2f64.ln()).powi(2))
            .sum::<f64>()
            / 12.0;
        let model = NllsModel::new(Arc::new(data), full_shard(12), 1).unwrap();
        assert!((model.value(&[0.0; 4]) - expected).abs() < 1e-14);
    }

    #[test]
    fn interpolating_labels_give_zero_loss_and_gradient() {
        let x = vec![1.0, 0.5, -0.3, 2.0, 0.0, 1.0];
        let w = [0.7, -1.2];
        let y: Vec<f64> = x.chunks(2).map(|r| softplus(vector::dot(&w, r))).collect();
        let data = Dataset::new(2, x, Labels::Real(y)).unwrap();
        let model = NllsModel::new(Arc::new(data), full_shard(3), 1).unwrap();
        let (f, g) = model.value_and_gradient(&w);
        assert!(f.abs() < 1e-30);
        assert!(vector::norm(&g) < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let data = generate_classification(15, 5, 3, 1.0, 8)
            .unwrap()
            .with_real_labels();
        let model = NllsModel::new(Arc::new(data), full_shard(15), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let w: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(rel_err(&model.gradient(&w), &fd_gradient(&model, &w, 1e-5)) < 1e-5);
            assert!(rel_err(&model.hvp(&w, &v), &fd_hvp(&model, &w, &v, 1e-5)) < 1e-5);
        }
    }

    #[test]
    fn hessian_has_negative_eigenvalue_somewhere() {
        let data = generate_classification(30, 6, 10, 1.0, 2)
            .unwrap()
            .with_real_labels();
        let model = NllsModel::new(Arc::new(data), full_shard(30), 1).unwrap();
        let d = model.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut found = false;
        for _ in 0..20 {
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut h = nalgebra::DMatrix::<f64>::zeros(d, d);
            for k in 0..d {
                let mut e = vec![0.0; d];
                e[k] = 1.0;
                let col = model.hvp(&w, &e);
                for i in 0..d {
                    h[(i, k)] = col[i];
                }
            }
            let eig = nalgebra::SymmetricEigen::new(h).eigenvalues;
            if eig.iter().any(|&l| l < -1e-8) {
                found = true;
                break;
            }
        }
        assert!(found, "no negative curvature found");
    }
}
