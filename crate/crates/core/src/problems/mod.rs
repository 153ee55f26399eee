//! Loss models, datasets and shard partitioning.
//!
//! Every worker owns one [`LossModel`] over its shard. For sample-based
//! models the local objective is `f_i(w) = (m/n) Σ_{j∈S_i} ℓ_j(w)` (plus any
//! regularizer), so that the driver's average `(1/m) Σ f_i` is exactly the
//! full-dataset mean loss.

mod dataset;
mod nlls;
mod partition;
mod quadratic;
mod softmax;

pub use dataset::{
    generate_classification, load_csv, write_csv, CsvSchema, Dataset, LabelKind, Labels,
};
pub use nlls::NllsModel;
pub use partition::{partition, Shard};
pub use quadratic::{QuadraticModel, QuadraticOracle};
pub use softmax::SoftmaxModel;

use serde::{Deserialize, Serialize};

/// Seeded Gaussian starting point with the given standard deviation.
pub fn random_start(dim: usize, scale: f64, seed: u64) -> Vec<f64> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect()
}

/// A twice-differentiable local objective with analytic derivatives.
///
/// The raw methods assume correctly sized inputs; checked entry points live
/// in [`crate::linops`] and on [`LossModel`].
pub trait Objective: Send + Sync {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn value(&self, w: &[f64]) -> f64;
    fn value_and_gradient(&self, w: &[f64]) -> (f64, Vec<f64>);
    fn hvp(&self, w: &[f64], v: &[f64]) -> Vec<f64>;
    fn is_convex(&self) -> bool;

    /// Number of samples the model averages over; 0 when not sample based.
    fn sample_count(&self) -> usize {
        0
    }

    /// Unbiased estimate of the local gradient from the given sample
    /// positions (indices into this model's shard).
    fn minibatch_gradient(&self, w: &[f64], _batch: &[usize]) -> Vec<f64> {
        self.value_and_gradient(w).1
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        self.value_and_gradient(w).1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Quadratic,
    Softmax,
    NonlinearLeastSquares,
}

/// One worker's local loss.
#[derive(Debug, Clone)]
pub enum LossModel {
    Quadratic(QuadraticModel),
    Softmax(SoftmaxModel),
    NonlinearLeastSquares(NllsModel),
}

impl LossModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            LossModel::Quadratic(_) => ModelKind::Quadratic,
            LossModel::Softmax(_) => ModelKind::Softmax,
            LossModel::NonlinearLeastSquares(_) => ModelKind::NonlinearLeastSquares,
        }
    }

    pub fn shard(&self) -> Option<&Shard> {
        match self {
            LossModel::Quadratic(_) => None,
            LossModel::Softmax(m) => Some(m.shard()),
            LossModel::NonlinearLeastSquares(m) => Some(m.shard()),
        }
    }

    /// Content hash of the data this model was built from.
    pub fn checksum(&self) -> u64 {
        match self {
            LossModel::Quadratic(m) => m.checksum(),
            LossModel::Softmax(m) => m.checksum(),
            LossModel::NonlinearLeastSquares(m) => m.checksum(),
        }
    }

    fn inner(&self) -> &dyn Objective {
        match self {
            LossModel::Quadratic(m) => m,
            LossModel::Softmax(m) => m,
            LossModel::NonlinearLeastSquares(m) => m,
        }
    }
}

impl Objective for LossModel {
    fn name(&self) -> &'static str {
        self.inner().name()
    }
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn value(&self, w: &[f64]) -> f64 {
        self.inner().value(w)
    }
    fn value_and_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
        self.inner().value_and_gradient(w)
    }
    fn hvp(&self, w: &[f64], v: &[f64]) -> Vec<f64> {
        self.inner().hvp(w, v)
    }
    fn is_convex(&self) -> bool {
        self.inner().is_convex()
    }
    fn sample_count(&self) -> usize {
        self.inner().sample_count()
    }
    fn minibatch_gradient(&self, w: &[f64], batch: &[usize]) -> Vec<f64> {
        self.inner().minibatch_gradient(w, batch)
    }
}

pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
pub(crate) mod testing {
    //! Finite-difference oracles shared by the model tests.
    use super::Objective;
    use crate::vector;

    pub fn fd_gradient<M: Objective + ?Sized>(model: &M, w: &[f64], eps: f64) -> Vec<f64> {
        (0..w.len())
            .map(|k| {
                let mut wp = w.to_vec();
                let mut wm = w.to_vec();
                wp[k] += eps;
                wm[k] -= eps;
                (model.value(&wp) - model.value(&wm)) / (2.0 * eps)
            })
            .collect()
    }

    pub fn fd_hvp<M: Objective + ?Sized>(model: &M, w: &[f64], v: &[f64], eps: f64) -> Vec<f64> {
        let mut wp = w.to_vec();
        let mut wm = w.to_vec();
        vector::axpy(eps, v, &mut wp);
        vector::axpy(-eps, v, &mut wm);
        let gp = model.gradient(&wp);
        let gm = model.gradient(&wm);
        gp.iter()
            .zip(&gm)
            .map(|(a, b)| (a - b) / (2.0 * eps))
            .collect()
    }

    pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        vector::norm(&vector::sub(a, b)) / vector::norm(b).max(1e-12)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_scalar_functions() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }
}
