//! Matrix-free linear operators.
//!
//! The sub-problems only ever touch the local Hessian through products
//! `H v`. The damped least-squares operator stacks `H` on top of `phi * I`
//! and is applied block-wise, so the `2d x d` matrix is never formed.

mod dense;

pub use dense::DenseMatrix;

use crate::error::{check_dim, DinoError, Result};
use crate::problems::Objective;
use crate::vector;

pub trait LinearOperator {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>>;
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn in_dim(&self) -> usize {
        (**self).in_dim()
    }
    fn out_dim(&self) -> usize {
        (**self).out_dim()
    }
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).apply(x)
    }
    fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        (**self).apply_transpose(y)
    }
}

/// An optimization iterate: finite, fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(DinoError::Config(
                "parameter vector must be non-empty".into(),
            ));
        }
        if !vector::all_finite(&values) {
            return Err(DinoError::non_finite("parameter vector"));
        }
        Ok(ParameterVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0);
        ParameterVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for ParameterVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// The padded right-hand side `(g; 0)` of the damped least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGradient {
    top: Vec<f64>,
}

impl AugmentedGradient {
    pub fn new(gradient: &[f64]) -> Self {
        AugmentedGradient {
            top: gradient.to_vec(),
        }
    }

    pub fn top(&self) -> &[f64] {
        &self.top
    }

    pub fn bottom(&self) -> Vec<f64> {
        vec![0.0; self.top.len()]
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut out = self.top.clone();
        out.resize(2 * self.top.len(), 0.0);
        out
    }

    pub fn norm(&self) -> f64 {
        vector::norm(&self.top)
    }
}

/// Local Hessian of a loss model at a fixed point, applied through HVPs.
pub struct HessianOperator<'a, M: Objective + ?Sized> {
    model: &'a M,
    w: &'a [f64],
}

impl<'a, M: Objective + ?Sized> HessianOperator<'a, M> {
    pub fn new(model: &'a M, w: &'a [f64]) -> Result<Self> {
        check_dim(model.dim(), w.len())?;
        Ok(HessianOperator { model, w })
    }
}

impl<M: Objective + ?Sized> LinearOperator for HessianOperator<'_, M> {
    fn in_dim(&self) -> usize {
        self.model.dim()
    }

    fn out_dim(&self) -> usize {
        self.model.dim()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        hvp_checked(self.model, self.w, x)
    }

    fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        hvp_checked(self.model, self.w, y)
    }
}

fn hvp_checked<M: Objective + ?Sized>(model: &M, w: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_dim(model.dim(), v.len())?;
    let out = model.hvp(w, v);
    if !vector::all_finite(&out) {
        return Err(DinoError::non_finite(format!(
            "Hessian-vector product of {} model at point with |w| = {:e}",
            model.name(),
            vector::norm(w)
        )));
    }
    Ok(out)
}

/// `∇²f_i(w) v`, evaluated analytically by the model.
pub fn hessian_vector_product<M: Objective + ?Sized>(
    model: &M,
    w: &ParameterVector,
    v: &[f64],
) -> Result<Vec<f64>> {
    check_dim(model.dim(), w.dim())?;
    if !vector::all_finite(v) {
        return Err(DinoError::non_finite("HVP input direction"));
    }
    hvp_checked(model, w.as_slice(), v)
}

fn check_phi(phi: f64) -> Result<()> {
    if phi > 0.0 && phi.is_finite() {
        Ok(())
    } else {
        Err(DinoError::Config(format!(
            "phi must be positive, got {phi}"
        )))
    }
}

/// `[H; phi I] v`, returned as the stacked `2d` vector.
pub fn augmented_apply<H: LinearOperator + ?Sized>(h: &H, phi: f64, v: &[f64]) -> Result<Vec<f64>> {
    check_phi(phi)?;
    let mut out = h.apply(v)?;
    out.extend(v.iter().map(|x| phi * x));
    Ok(out)
}

/// `[H; phi I]^T u = H u_top + phi u_bottom` for symmetric `H`.
pub fn augmented_transpose_apply<H: LinearOperator + ?Sized>(
    h: &H,
    phi: f64,
    u: &[f64],
) -> Result<Vec<f64>> {
    check_phi(phi)?;
    let d = h.in_dim();
    check_dim(2 * d, u.len())?;
    let (top, bottom) = u.split_at(d);
    let mut out = h.apply_transpose(top)?;
    vector::axpy(phi, bottom, &mut out);
    Ok(out)
}

/// Normal-equations operator `(H^T H + phi^2 I) v`, two HVPs.
pub fn normal_apply<H: LinearOperator + ?Sized>(h: &H, phi: f64, v: &[f64]) -> Result<Vec<f64>> {
    check_phi(phi)?;
    let hv = h.apply(v)?;
    let mut out = h.apply_transpose(&hv)?;
    vector::axpy(phi * phi, v, &mut out);
    Ok(out)
}

/// The stacked operator as a [`LinearOperator`] in its own right.
pub struct AugmentedOperator<'a, H: LinearOperator + ?Sized> {
    h: &'a H,
    phi: f64,
}

impl<'a, H: LinearOperator + ?Sized> AugmentedOperator<'a, H> {
    pub fn new(h: &'a H, phi: f64) -> Result<Self> {
        check_phi(phi)?;
        Ok(AugmentedOperator { h, phi })
    }
}

impl<H: LinearOperator + ?Sized> LinearOperator for AugmentedOperator<'_, H> {
    fn in_dim(&self) -> usize {
        self.h.in_dim()
    }

    fn out_dim(&self) -> usize {
        2 * self.h.in_dim()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        augmented_apply(self.h, self.phi, x)
    }

    fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        augmented_transpose_apply(self.h, self.phi, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticModel;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn h21() -> DenseMatrix {
        DenseMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 3.0]])
    }

    #[test]
    fn quadratic_hvp_is_matrix_product() {
        let model = QuadraticModel::new(DenseMatrix::diag(&[2.0, 4.0]), vec![0.0, 0.0]).unwrap();
        let w = ParameterVector::zeros(2);
        assert_eq!(
            hessian_vector_product(&model, &w, &[1.0, 1.0]).unwrap(),
            vec![2.0, 4.0]
        );
        assert_eq!(
            hessian_vector_product(&model, &w, &[0.0, 0.0]).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn hvp_rejects_wrong_dimension() {
        let model = QuadraticModel::new(DenseMatrix::identity(2), vec![0.0; 2]).unwrap();
        let w = ParameterVector::zeros(2);
        assert!(matches!(
            hessian_vector_product(&model, &w, &[1.0]),
            Err(DinoError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn augmented_apply_examples() {
        let i2 = DenseMatrix::identity(2);
        assert_eq!(
            augmented_apply(&i2, 1.0, &[1.0, 2.0]).unwrap(),
            vec![1.0, 2.0, 1.0, 2.0]
        );
        let z = DenseMatrix::zeros(2, 2);
        assert_eq!(
            augmented_apply(&z, 2.0, &[3.0, 0.0]).unwrap(),
            vec![0.0, 0.0, 6.0, 0.0]
        );
        assert_eq!(
            augmented_apply(&h21(), 0.5, &[1.0, 1.0]).unwrap(),
            vec![3.0, 4.0, 0.5, 0.5]
        );
    }

    #[test]
    fn augmented_transpose_examples() {
        let i2 = DenseMatrix::identity(2);
        assert_eq!(
            augmented_transpose_apply(&i2, 1.0, &[1.0, 2.0, 3.0, 4.0]).unwrap(),
            vec![4.0, 6.0]
        );
        assert_eq!(
            augmented_transpose_apply(&i2, 1.0, &[0.0; 4]).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            augmented_transpose_apply(&h21(), 0.5, &[1.0, 1.0, 2.0, 2.0]).unwrap(),
            vec![4.0, 5.0]
        );
    }

    #[test]
    fn normal_apply_examples() {
        let i2 = DenseMatrix::identity(2);
        assert_eq!(normal_apply(&i2, 1.0, &[1.0, 0.0]).unwrap(), vec![2.0, 0.0]);
        let z = DenseMatrix::zeros(2, 2);
        assert_eq!(normal_apply(&z, 3.0, &[1.0, 1.0]).unwrap(), vec![9.0, 9.0]);
        assert_eq!(
            normal_apply(&h21(), 0.5, &[1.0, 1.0]).unwrap(),
            vec![10.25, 15.25]
        );
    }

    #[test]
    fn non_positive_phi_is_config_error() {
        let i2 = DenseMatrix::identity(2);
        for phi in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                augmented_apply(&i2, phi, &[1.0, 1.0]),
                Err(DinoError::Config(_))
            ));
            assert!(matches!(
                normal_apply(&i2, phi, &[1.0, 1.0]),
                Err(DinoError::Config(_))
            ));
            assert!(matches!(
                augmented_transpose_apply(&i2, phi, &[1.0; 4]),
                Err(DinoError::Config(_))
            ));
        }
    }

    #[test]
    fn augmented_gradient_padding() {
        let g = AugmentedGradient::new(&[3.0, 4.0]);
        assert_eq!(g.bottom(), vec![0.0, 0.0]);
        assert_eq!(g.stacked(), vec![3.0, 4.0, 0.0, 0.0]);
        assert_eq!(g.norm(), 5.0);
    }

    fn random_symmetric(rng: &mut ChaCha8Rng, d: usize) -> DenseMatrix {
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let x: f64 = rng.random_range(-1.0..1.0);
                data[i * d + j] = x;
                data[j * d + i] = x;
            }
        }
        DenseMatrix::new(d, d, data)
    }

    #[test]
    fn adjoint_consistency_of_augmented_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let d = rng.random_range(1..12);
            let h = random_symmetric(&mut rng, d);
            let phi = rng.random_range(0.01..3.0);
            let op = AugmentedOperator::new(&h, phi).unwrap();
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let u: Vec<f64> = (0..2 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs = vector::dot(&op.apply(&v).unwrap(), &u);
            let rhs = vector::dot(&v, &op.apply_transpose(&u).unwrap());
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + vector::norm(&v) * vector::norm(&u)));
        }
    }

    #[test]
    fn smallest_singular_value_of_stacked_matrix_is_at_least_phi() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let d = rng.random_range(1..20);
            let h = random_symmetric(&mut rng, d);
            let phi = rng.random_range(0.01..2.0);
            let mut stacked = nalgebra::DMatrix::<f64>::zeros(2 * d, d);
            for i in 0..d {
                for j in 0..d {
                    stacked[(i, j)] = h.get(i, j);
                }
                stacked[(d + i, i)] = phi;
            }
            let sv = stacked.singular_values();
            let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(smin >= phi * (1.0 - 1e-12), "smin {smin} < phi {phi}");
        }
    }

    proptest! {
        #[test]
        fn normal_operator_has_phi_squared_floor(
            entries in proptest::collection::vec(-2.0f64..2.0, 9),
            v in proptest::collection::vec(-5.0f64..5.0, 3),
            phi in 0.01f64..3.0,
        ) {
            let mut data = entries.clone();
            for i in 0..3 {
                for j in 0..i {
                    data[j * 3 + i] = data[i * 3 + j];
                }
            }
            let h = DenseMatrix::new(3, 3, data);
            let nv = normal_apply(&h, phi, &v).unwrap();
            let lhs = vector::dot(&nv, &v);
            let floor = phi * phi * vector::norm_sq(&v);
            prop_assert!(lhs >= floor - 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn augmented_apply_is_linear(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            x in proptest::collection::vec(-5.0f64..5.0, 2),
            y in proptest::collection::vec(-5.0f64..5.0, 2),
        ) {
            let h = DenseMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 3.0]]);
            let combo: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| a * xi + b * yi).collect();
            let lhs = augmented_apply(&h, 0.7, &combo).unwrap();
            let ax = augmented_apply(&h, 0.7, &x).unwrap();
            let ay = augmented_apply(&h, 0.7, &y).unwrap();
            for k in 0..4 {
                prop_assert!((lhs[k] - (a * ax[k] + b * ay[k])).abs() <= 1e-10 * (1.0 + lhs[k].abs()));
            }
        }
    }
}
