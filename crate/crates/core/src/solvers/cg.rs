use super::{SolverCertificate, SolverConfig};
use crate::error::{DinoError, Result};
use crate::linops::{normal_apply, LinearOperator};
use crate::vector;

/// CG on `(H² + phi² I) v = g` from `v = 0`.
///
/// Returns the CG iterate (iteration >= 1) with the smallest recomputed
/// residual. Every CG iterate from a zero start has `<v, g> > 0`, so the
/// positivity requirement holds regardless of the budget.
pub fn solve_v2<H: LinearOperator + ?Sized>(
    h: &H,
    phi: f64,
    g: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolverCertificate)> {
    cfg.validate()?;
    let d = h.in_dim();
    crate::error::check_dim(d, g.len())?;
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(DinoError::Config(format!(
            "phi must be positive, got {phi}"
        )));
    }
    let g_norm = vector::norm(g);
    if g_norm <= cfg.floor(d) {
        return Err(DinoError::Invariant(
            "CG solve requested for a zero gradient".into(),
        ));
    }

    let mut x = vec![0.0; d];
    let mut r = g.to_vec();
    let mut p = g.to_vec();
    let mut rr = vector::norm_sq(&r);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut cert = SolverCertificate::default();

    for k in 1..=cfg.max_iters {
        let q = normal_apply(h, phi, &p)?;
        let pq = vector::dot(&p, &q);
        if !(pq > 0.0) {
            break;
        }
        let step = rr / pq;
        vector::axpy(step, &p, &mut x);
        vector::axpy(-step, &q, &mut r);
        if !vector::all_finite(&x) {
            return Err(DinoError::non_finite(format!("CG iterate {k}")));
        }
        let residual = vector::sub(&normal_apply(h, phi, &x)?, g);
        let ratio = vector::norm(&residual) / g_norm;
        if best.as_ref().is_none_or(|(_, b)| ratio < *b) {
            best = Some((x.clone(), ratio));
        }
        cert.iters_used_2 = k;
        if ratio <= cfg.eps2_target {
            break;
        }
        let rr_new = vector::norm_sq(&r);
        if rr_new == 0.0 {
            break;
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }

    let (v, ratio) = best.ok_or_else(|| {
        DinoError::Invariant("CG made no progress: normal operator not positive definite".into())
    })?;
    let inner = vector::dot(&v, g);
    if !(inner > 0.0) {
        return Err(DinoError::Invariant(format!(
            "CG iterate has <v2, g> = {inner:e} <= 0 after {} iterations",
            cert.iters_used_2
        )));
    }
    cert.residual_ratio_2 = Some(ratio);
    cert.inner_product_2 = Some(inner);
    Ok((v, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::DenseMatrix;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        vector::norm(&vector::sub(a, b)) / vector::norm(b)
    }

    fn random_symmetric(rng: &mut ChaCha8Rng, d: usize) -> DenseMatrix {
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let x = rng.random_range(-1.0..1.0);
                data[i * d + j] = x;
                data[j * d + i] = x;
            }
        }
        DenseMatrix::new(d, d, data)
    }

    #[test]
    fn identity_hessian() {
        let h = DenseMatrix::identity(2);
        let (v, cert) = solve_v2(&h, 1.0, &[2.0, 0.0], &SolverConfig::default()).unwrap();
        assert!(rel(&v, &[1.0, 0.0]) < 1e-15);
        assert_eq!(cert.iters_used_2, 1);
        assert!(cert.residual_ratio_2.unwrap() < 1e-15);
    }

    #[test]
    fn single_iteration_is_scaled_gradient() {
        let h = DenseMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let g = [1.0, -0.5];
        let (v, cert) = solve_v2(&h, 0.5, &g, &SolverConfig::with_max_iters(1)).unwrap();
        let ag = normal_apply(&h, 0.5, &g).unwrap();
        let c = vector::dot(&g, &g) / vector::dot(&g, &ag);
        assert!(rel(&v, &[c * g[0], c * g[1]]) < 1e-15);
        assert!(cert.inner_product_2.unwrap() > 0.0);
    }

    #[test]
    fn matches_dense_solution() {
        let h = DenseMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let (v, _) = solve_v2(&h, 0.5, &[1.0, 1.0], &SolverConfig::with_max_iters(100)).unwrap();
        let hm = DMatrix::from_row_slice(2, 2, h.data());
        let m = &hm * &hm + DMatrix::identity(2, 2) * 0.25;
        let x = m
            .lu()
            .solve(&DVector::from_column_slice(&[1.0, 1.0]))
            .unwrap();
        assert!(rel(&v, x.as_slice()) < 1e-8);
    }

    #[test]
    fn certificate_matches_recomputed_residual_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let h = random_symmetric(&mut rng, 20);
        let g: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (v, cert) = solve_v2(&h, 0.3, &g, &SolverConfig::with_max_iters(5)).unwrap();
        let oracle =
            vector::norm(&vector::sub(&normal_apply(&h, 0.3, &v).unwrap(), &g)) / vector::norm(&g);
        assert_eq!(cert.residual_ratio_2.unwrap().to_bits(), oracle.to_bits());
        assert_eq!(
            cert.inner_product_2.unwrap().to_bits(),
            vector::dot(&v, &g).to_bits()
        );
    }

    #[test]
    fn positivity_and_monotonicity_over_budgets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let d = rng.random_range(5..25);
            let h = random_symmetric(&mut rng, d);
            let g: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let phi = rng.random_range(0.01..1.0);
            let mut prev = f64::INFINITY;
            for k in 1..=50 {
                let (_, cert) = solve_v2(&h, phi, &g, &SolverConfig::with_max_iters(k)).unwrap();
                assert!(cert.inner_product_2.unwrap() > 0.0);
                let r = cert.residual_ratio_2.unwrap();
                assert!(r <= prev);
                prev = r;
            }
        }
    }
}
