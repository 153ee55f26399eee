use super::{SolverCertificate, SolverConfig};
use crate::error::{DinoError, Result};
use crate::linops::{normal_apply, LinearOperator};
use crate::vector;

/// Stable Givens rotation: returns `(c, s, r)` with `r = hypot(a, b)`.
fn sym_ortho(a: f64, b: f64) -> (f64, f64, f64) {
    if b == 0.0 {
        (a.signum(), 0.0, a.abs())
    } else if a == 0.0 {
        (0.0, b.signum(), b.abs())
    } else if b.abs() > a.abs() {
        let tau = a / b;
        let s = b.signum() / (1.0 + tau * tau).sqrt();
        (s * tau, s, b / s)
    } else {
        let tau = b / a;
        let c = a.signum() / (1.0 + tau * tau).sqrt();
        (c, c * tau, a / c)
    }
}

/// Damped least squares `min |H v - g|² + phi² |v|²` by LSMR from `v = 0`.
///
/// Every iterate's normal-equation residual is recomputed with two HVPs and
/// the best iterate seen (the zero start included) is returned, so the
/// certified ratio never increases with the iteration budget.
pub fn solve_v1<H: LinearOperator + ?Sized>(
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
            "least-squares solve requested for a zero gradient".into(),
        ));
    }

    let hg = h.apply(g)?;
    let hg_norm = vector::norm(&hg);
    let mut best = vec![0.0; d];
    let mut cert = SolverCertificate {
        residual_ratio_1: Some(1.0),
        ..Default::default()
    };
    if hg_norm <= cfg.floor(d) {
        cert.degenerate_rhs = true;
        return Ok((best, cert));
    }
    let ratio_of = |x: &[f64]| -> Result<f64> {
        let r = vector::sub(&normal_apply(h, phi, x)?, &hg);
        Ok(vector::norm(&r) / hg_norm)
    };

    // Golub-Kahan bidiagonalization of H started from g.
    let mut u = g.to_vec();
    let mut beta = g_norm;
    vector::scale(1.0 / beta, &mut u);
    let mut v = hg.clone();
    // Hᵀu = Hg / |g| since H is symmetric.
    let mut alpha = hg_norm / g_norm;
    vector::scale(1.0 / hg_norm, &mut v);

    let mut x = vec![0.0; d];
    let mut hvec = v.clone();
    let mut hbar = vec![0.0; d];
    let mut zetabar = alpha * beta;
    let mut alphabar = alpha;
    let mut rho = 1.0;
    let mut rhobar = 1.0;
    let mut cbar = 1.0;
    let mut sbar = 0.0;

    for k in 1..=cfg.max_iters {
        let mut hv = h.apply(&v)?;
        vector::axpy(-alpha, &u, &mut hv);
        u = hv;
        beta = vector::norm(&u);
        if beta > 0.0 {
            vector::scale(1.0 / beta, &mut u);
            let mut htu = h.apply_transpose(&u)?;
            vector::axpy(-beta, &v, &mut htu);
            v = htu;
            alpha = vector::norm(&v);
            if alpha > 0.0 {
                vector::scale(1.0 / alpha, &mut v);
            }
        }

        // Eliminate the damping term, then the subdiagonal beta.
        let (_, _, alphahat) = sym_ortho(alphabar, phi);
        let rhoold = rho;
        let (c, s, rho_new) = sym_ortho(alphahat, beta);
        rho = rho_new;
        let thetanew = s * alpha;
        alphabar = c * alpha;

        let rhobarold = rhobar;
        let thetabar = sbar * rho;
        let (cbar_new, sbar_new, rhobar_new) = sym_ortho(cbar * rho, thetanew);
        cbar = cbar_new;
        sbar = sbar_new;
        rhobar = rhobar_new;
        let zeta = cbar * zetabar;
        zetabar *= -sbar;

        let hbar_coef = thetabar * rho / (rhoold * rhobarold);
        for (hb, hi) in hbar.iter_mut().zip(&hvec) {
            *hb = hi - hbar_coef * *hb;
        }
        vector::axpy(zeta / (rho * rhobar), &hbar, &mut x);
        let h_coef = thetanew / rho;
        for (hi, vi) in hvec.iter_mut().zip(&v) {
            *hi = vi - h_coef * *hi;
        }

        if !vector::all_finite(&x) {
            return Err(DinoError::non_finite(format!("LSMR iterate {k}")));
        }
        let ratio = ratio_of(&x)?;
        if ratio < cert.residual_ratio_1.unwrap_or(f64::INFINITY) {
            best.copy_from_slice(&x);
            cert.residual_ratio_1 = Some(ratio);
        }
        cert.iters_used_1 = k;
        if ratio <= cfg.eps1_target || alpha == 0.0 || beta == 0.0 {
            break;
        }
    }
    Ok((best, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::DenseMatrix;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_v1(h: &DenseMatrix, phi: f64, g: &[f64]) -> Vec<f64> {
        let d = g.len();
        let hm = DMatrix::from_row_slice(d, d, h.data());
        let m = &hm * &hm + DMatrix::identity(d, d) * (phi * phi);
        let rhs = &hm * DVector::from_column_slice(g);
        m.lu().solve(&rhs).unwrap().as_slice().to_vec()
    }

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        vector::norm(&vector::sub(a, b)) / vector::norm(b)
    }

    #[test]
    fn identity_hessian_halves_gradient() {
        let h = DenseMatrix::identity(2);
        let (v, cert) = solve_v1(&h, 1.0, &[2.0, 0.0], &SolverConfig::default()).unwrap();
        assert!(rel(&v, &[1.0, 0.0]) < 1e-14);
        assert!(cert.residual_ratio_1.unwrap() < 1e-14);
    }

    #[test]
    fn matches_dense_solution() {
        let h = DenseMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let (v, _) = solve_v1(&h, 0.5, &[1.0, 1.0], &SolverConfig::with_max_iters(200)).unwrap();
        assert!(rel(&v, &dense_v1(&h, 0.5, &[1.0, 1.0])) < 1e-8);
    }

    #[test]
    fn matches_dense_solution_on_random_indefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let d = rng.random_range(2..15);
            let mut data = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..=i {
                    let x = rng.random_range(-1.0..1.0);
                    data[i * d + j] = x;
                    data[j * d + i] = x;
                }
            }
            let h = DenseMatrix::new(d, d, data);
            let g: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let phi = rng.random_range(0.3..1.0);
            let (v, cert) = solve_v1(&h, phi, &g, &SolverConfig::with_max_iters(4 * d)).unwrap();
            assert!(rel(&v, &dense_v1(&h, phi, &g)) < 1e-8, "d={d}");
            assert!(cert.residual_ratio_1.unwrap() < 1e-8);
        }
    }

    #[test]
    fn zero_hessian_product_is_degenerate() {
        let h = DenseMatrix::zeros(3, 3);
        let (v, cert) = solve_v1(&h, 1.0, &[1.0, 2.0, 3.0], &SolverConfig::default()).unwrap();
        assert_eq!(v, vec![0.0; 3]);
        assert!(cert.degenerate_rhs);
        assert_eq!(cert.residual_ratio_1, Some(1.0));
    }

    #[test]
    fn zero_gradient_is_contract_violation() {
        let h = DenseMatrix::identity(2);
        assert!(matches!(
            solve_v1(&h, 1.0, &[0.0, 0.0], &SolverConfig::default()),
            Err(DinoError::Invariant(_))
        ));
    }

    #[test]
    fn ratio_non_increasing_in_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = 30;
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let x = rng.random_range(-1.0..1.0);
                data[i * d + j] = x;
                data[j * d + i] = x;
            }
        }
        let h = DenseMatrix::new(d, d, data);
        let g: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut prev = f64::INFINITY;
        for k in 1..=40 {
            let (_, cert) = solve_v1(&h, 0.05, &g, &SolverConfig::with_max_iters(k)).unwrap();
            let r = cert.residual_ratio_1.unwrap();
            assert!(r <= prev && r <= 1.0);
            prev = r;
        }
    }

    #[test]
    fn deterministic() {
        let h = DenseMatrix::from_rows(&[&[2.0, 1.0], &[1.0, -3.0]]);
        let a = solve_v1(&h, 0.1, &[1.0, 0.3], &SolverConfig::default()).unwrap();
        let b = solve_v1(&h, 0.1, &[1.0, 0.3], &SolverConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
