use serde::{Deserialize, Serialize};

use super::HyperParams;
use crate::error::{DinoError, Result};
use crate::linops::HessianOperator;
use crate::problems::Objective;
use crate::solvers::{solve_v1, solve_v2, SolverCertificate, SolverConfig};
use crate::vector;

/// Roundoff allowance on the descent inequality.
pub fn descent_tolerance(theta: f64, grad_norm_sq: f64) -> f64 {
    1e-10 * (1.0 + theta * grad_norm_sq)
}

/// One worker's update direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDirection {
    pub p: Vec<f64>,
    /// The least-squares direction alone was not a sufficient descent
    /// direction and was corrected.
    pub enforced: bool,
    pub lambda: f64,
    pub certs: SolverCertificate,
}

/// Compute `p_i` from the local Hessian at `w` and the global gradient `g`.
///
/// `p_i = -v1` when `<v1, g> >= theta |g|²`. Otherwise the direction is
/// pushed onto the constraint boundary, `p_i = -v1 - lambda v2` with
/// `lambda = (theta |g|² - <v1, g>) / <v2, g>`, which gives
/// `<p_i, g> = -theta |g|²`.
pub fn local_direction<M: Objective + ?Sized>(
    model: &M,
    w: &[f64],
    g: &[f64],
    hp: &HyperParams,
    solver: &SolverConfig,
) -> Result<LocalDirection> {
    let h = HessianOperator::new(model, w)?;
    let g_sq = vector::norm_sq(g);
    let threshold = hp.theta * g_sq;

    let (v1, cert1) = solve_v1(&h, hp.phi, g, solver)?;
    let dot1 = vector::dot(&v1, g);
    let mut out = if dot1 >= threshold {
        LocalDirection {
            p: v1.iter().map(|x| -x).collect(),
            enforced: false,
            lambda: 0.0,
            certs: cert1,
        }
    } else {
        let (v2, cert2) = solve_v2(&h, hp.phi, g, solver)?;
        let dot2 = vector::dot(&v2, g);
        if !(dot2 > 0.0) {
            return Err(DinoError::Invariant(format!(
                "<v2, g> = {dot2:e} is not positive; CG contract broken"
            )));
        }
        let lambda = (threshold - dot1) / dot2;
        if !lambda.is_finite() {
            return Err(DinoError::non_finite(format!(
                "lambda from <v1,g> = {dot1:e}, <v2,g> = {dot2:e}"
            )));
        }
        let p = v1.iter().zip(&v2).map(|(a, b)| -a - lambda * b).collect();
        LocalDirection {
            p,
            enforced: true,
            lambda,
            certs: cert1.merge(cert2),
        }
    };
    if !vector::all_finite(&out.p) {
        return Err(DinoError::non_finite(format!(
            "local direction of {} model",
            model.name()
        )));
    }
    let dot = vector::dot(&out.p, g);
    if dot > -threshold + descent_tolerance(hp.theta, g_sq) {
        return Err(DinoError::Invariant(format!(
            "local direction has <p, g> = {dot:e} > -theta|g|² = {:e}",
            -threshold
        )));
    }
    out.lambda = out.lambda.max(0.0);
    Ok(out)
}

/// Check `<p, g> <= -theta |g|² + tol`.
pub(crate) fn check_descent(p: &[f64], g: &[f64], theta: f64) -> Result<f64> {
    let g_sq = vector::norm_sq(g);
    let dot = vector::dot(p, g);
    if dot > -theta * g_sq + descent_tolerance(theta, g_sq) {
        return Err(DinoError::Invariant(format!(
            "aggregate direction has <p, g> = {dot:e} > -theta|g|² = {:e}",
            -theta * g_sq
        )));
    }
    Ok(dot)
}

/// Mean of the local directions, summed in worker order.
pub(crate) fn mean_in_order(sum: &[f64], m: usize) -> Vec<f64> {
    sum.iter().map(|s| s / m as f64).collect()
}

/// `p_t = (1/m) Σ p_i`, verified to be a sufficient descent direction.
pub fn aggregate_direction(
    directions: &[LocalDirection],
    g: &[f64],
    hp: &HyperParams,
) -> Result<Vec<f64>> {
    let parts: Vec<Vec<f64>> = directions.iter().map(|d| d.p.clone()).collect();
    let sum = crate::comm::sum_in_order(&parts)?;
    let p = mean_in_order(&sum, directions.len());
    check_descent(&p, g, hp.theta)?;
    Ok(p)
}
