use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use sha2::{Digest, Sha256};

use super::Objective;
use crate::error::{DinoError, Result};
use crate::linops::DenseMatrix;
use crate::vector;

/// `f_i(w) = ½ wᵀ A w - bᵀ w` with symmetric (possibly indefinite) `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    a: DenseMatrix,
    b: Vec<f64>,
}

impl QuadraticModel {
    pub fn new(a: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        if a.rows() != a.cols() || a.rows() == 0 {
            return Err(DinoError::Config(
                "quadratic needs a non-empty square matrix".into(),
            ));
        }
        if b.len() != a.rows() {
            return Err(DinoError::DimensionMismatch {
                expected: a.rows(),
                got: b.len(),
            });
        }
        if !a.is_symmetric(1e-12 * (1.0 + a.data().iter().fold(0.0f64, |m, x| m.max(x.abs())))) {
            return Err(DinoError::Config(
                "quadratic matrix must be symmetric".into(),
            ));
        }
        if !vector::all_finite(a.data()) || !vector::all_finite(&b) {
            return Err(DinoError::non_finite("quadratic coefficients"));
        }
        Ok(QuadraticModel { a, b })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn linear_term(&self) -> &[f64] {
        &self.b
    }

    pub fn checksum(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(b"quadratic");
        for v in self.a.data().iter().chain(&self.b) {
            h.update(v.to_le_bytes());
        }
        u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
    }
}

impl Objective for QuadraticModel {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, w: &[f64]) -> f64 {
        0.5 * vector::dot(w, &self.a.matvec(w)) - vector::dot(&self.b, w)
    }

    fn value_and_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let aw = self.a.matvec(w);
        let f = 0.5 * vector::dot(w, &aw) - vector::dot(&self.b, w);
        (f, vector::sub(&aw, &self.b))
    }

    fn hvp(&self, _w: &[f64], v: &[f64]) -> Vec<f64> {
        self.a.matvec(v)
    }

    fn is_convex(&self) -> bool {
        SymmetricEigen::new(to_nalgebra(&self.a))
            .eigenvalues
            .iter()
            .all(|&l| l >= 0.0)
    }
}

fn to_nalgebra(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.data())
}

/// A mixture of quadratics whose average is strongly convex, with the
/// closed-form global quantities needed to check convergence bounds.
#[derive(Debug, Clone)]
pub struct QuadraticOracle {
    models: Vec<QuadraticModel>,
    mean_a: DenseMatrix,
    minimizer: Vec<f64>,
    f_star: f64,
    mu: f64,
    smoothness: f64,
    local_smoothness: Vec<f64>,
}

impl QuadraticOracle {
    pub fn new(models: Vec<QuadraticModel>) -> Result<Self> {
        let m = models.len();
        if m == 0 {
            return Err(DinoError::Config("oracle needs at least one model".into()));
        }
        let d = models[0].dim();
        if let Some(bad) = models.iter().find(|q| q.dim() != d) {
            return Err(DinoError::DimensionMismatch {
                expected: d,
                got: bad.dim(),
            });
        }
        let mut a = DMatrix::<f64>::zeros(d, d);
        let mut b = DVector::<f64>::zeros(d);
        for q in &models {
            a += to_nalgebra(&q.a);
            b += DVector::from_column_slice(&q.b);
        }
        a /= m as f64;
        b /= m as f64;
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| DinoError::Config("mean quadratic is not positive definite".into()))?;
        let minimizer = chol.solve(&b);
        let eig = SymmetricEigen::new(a.clone()).eigenvalues;
        let mu = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let smoothness = eig.iter().cloned().fold(0.0, f64::max);
        let local_smoothness = models
            .iter()
            .map(|q| {
                SymmetricEigen::new(to_nalgebra(&q.a))
                    .eigenvalues
                    .iter()
                    .fold(0.0f64, |acc, l| acc.max(l.abs()))
            })
            .collect();
        let f_star = -0.5 * b.dot(&minimizer);
        let mean_a = DenseMatrix::new(d, d, a.transpose().as_slice().to_vec());
        Ok(QuadraticOracle {
            models,
            mean_a,
            minimizer: minimizer.as_slice().to_vec(),
            f_star,
            mu,
            smoothness,
            local_smoothness,
        })
    }

    /// `m` random quadratics in dimension `d`. Each local matrix is
    /// `Q diag(λ) Qᵀ` with a random rotation and eigenvalues uniform in
    /// `eig_range`; linear terms are standard normal.
    pub fn random(d: usize, m: usize, eig_range: (f64, f64), seed: u64) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(DinoError::Config("oracle needs d > 0 and m > 0".into()));
        }
        let (lo, hi) = eig_range;
        if !(lo <= hi) {
            return Err(DinoError::Config(format!(
                "bad eigenvalue range {lo}..{hi}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let spread = Uniform::new_inclusive(lo, hi).expect("valid range");
        let mut models = Vec::with_capacity(m);
        for _ in 0..m {
            let g = DMatrix::<f64>::from_fn(d, d, |_, _| normal.sample(&mut rng));
            let q = g.qr().q();
            let lambda = DVector::<f64>::from_fn(d, |_, _| spread.sample(&mut rng));
            let a = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
            let a = (&a + a.transpose()) * 0.5;
            let b: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
            let dense = DenseMatrix::new(d, d, a.transpose().as_slice().to_vec());
            models.push(QuadraticModel::new(dense, b)?);
        }
        QuadraticOracle::new(models)
    }

    pub fn models(&self) -> &[QuadraticModel] {
        &self.models
    }

    pub fn dim(&self) -> usize {
        self.minimizer.len()
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    /// Smallest eigenvalue of the mean matrix; `f - f* <= |∇f|² / mu` holds.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Largest eigenvalue of the mean matrix.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// Spectral norms of the local matrices.
    pub fn local_smoothness(&self) -> &[f64] {
        &self.local_smoothness
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        self.models.iter().map(|q| q.value(w)).sum::<f64>() / self.models.len() as f64
    }

    /// `f(w) - f*` evaluated as `½ (w - w*)ᵀ Ā (w - w*)`, free of cancellation.
    pub fn gap(&self, w: &[f64]) -> f64 {
        let e = vector::sub(w, &self.minimizer);
        0.5 * vector::dot(&e, &self.mean_a.matvec(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_oracle() {
        let q = QuadraticModel::new(DenseMatrix::identity(3), vec![0.0; 3]).unwrap();
        let o = QuadraticOracle::new(vec![q]).unwrap();
        assert_eq!(o.f_star(), 0.0);
        assert_eq!(o.minimizer(), &[0.0, 0.0, 0.0]);
        assert!((o.mu() - 1.0).abs() < 1e-14);
        assert!((o.smoothness() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_oracle() {
        let q = QuadraticModel::new(DenseMatrix::diag(&[1.0, 4.0]), vec![1.0, 4.0]).unwrap();
        let o = QuadraticOracle::new(vec![q]).unwrap();
        assert!((o.minimizer()[0] - 1.0).abs() < 1e-14);
        assert!((o.minimizer()[1] - 1.0).abs() < 1e-14);
        assert!((o.mu() - 1.0).abs() < 1e-14);
        assert!((o.smoothness() - 4.0).abs() < 1e-14);
        assert!((o.f_star() - (-2.5)).abs() < 1e-14);
    }

    /// Gaussian elimination with partial pivoting, independent of nalgebra.
    fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
                .unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn random_mixture_minimizer_matches_dense_solve() {
        let o = QuadraticOracle::random(6, 3, (0.5, 5.0), 17).unwrap();
        let d = 6;
        let mut a = vec![vec![0.0; d]; d];
        let mut b = vec![0.0; d];
        for q in o.models() {
            for i in 0..d {
                for j in 0..d {
                    a[i][j] += q.matrix().get(i, j) / 3.0;
                }
                b[i] += q.linear_term()[i] / 3.0;
            }
        }
        let x = gauss_solve(a, b);
        for (xi, wi) in x.iter().zip(o.minimizer()) {
            assert!((xi - wi).abs() < 1e-12);
        }
        let grad: Vec<f64> = {
            let mut g = vec![0.0; d];
            for q in o.models() {
                vector::axpy(1.0 / 3.0, &q.gradient(o.minimizer()), &mut g);
            }
            g
        };
        assert!(vector::norm(&grad) < 1e-12);
        assert!((o.objective(o.minimizer()) - o.f_star()).abs() < 1e-12);
    }

    #[test]
    fn gap_matches_objective_difference() {
        let o = QuadraticOracle::random(5, 2, (1.0, 3.0), 3).unwrap();
        let w = vec![0.3, -1.0, 2.0, 0.0, 0.5];
        assert!((o.gap(&w) - (o.objective(&w) - o.f_star())).abs() < 1e-12);
    }

    #[test]
    fn indefinite_mean_rejected() {
        let q = QuadraticModel::new(DenseMatrix::diag(&[1.0, -2.0]), vec![0.0; 2]).unwrap();
        assert!(QuadraticOracle::new(vec![q]).is_err());
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(QuadraticModel::new(a, vec![0.0; 2]).is_err());
    }
}
