use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{HyperParams, IterationRecord};
use crate::error::{DinoError, Result};
use crate::problems::Objective;
use crate::vector;

/// Multiplier applied to power-iteration estimates, which approach the
/// spectral norm from below.
pub const LIPSCHITZ_SAFETY: f64 = 1.5;
pub const LIPSCHITZ_FLOOR: f64 = 1e-12;
const POWER_ITERS: usize = 100;

/// Upper estimate of the local gradient Lipschitz constant.
///
/// Convex models use power iteration on the Hessian at `w0`. Non-convex
/// models take the maximum over `w0` and `probes` random points around it.
pub fn estimate_lipschitz<M: Objective + ?Sized>(
    model: &M,
    w0: &[f64],
    probes: usize,
    seed: u64,
) -> Result<f64> {
    crate::error::check_dim(model.dim(), w0.len())?;
    let d = w0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![w0.to_vec()];
    if !model.is_convex() {
        let spread = 1.0 / (d as f64).sqrt();
        for _ in 0..probes {
            let p: Vec<f64> = w0
                .iter()
                .map(|x| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x + spread * z
                })
                .collect();
            points.push(p);
        }
    }
    let mut best = 0.0f64;
    for w in &points {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = vector::norm(&v);
        vector::scale(1.0 / n, &mut v);
        let mut est = 0.0;
        for _ in 0..POWER_ITERS {
            let hv = model.hvp(w, &v);
            let n = vector::norm(&hv);
            if !n.is_finite() {
                return Err(DinoError::non_finite(format!(
                    "power iteration on {} model",
                    model.name()
                )));
            }
            est = n;
            if n == 0.0 {
                break;
            }
            v = hv;
            vector::scale(1.0 / n, &mut v);
        }
        best = best.max(est);
    }
    Ok((LIPSCHITZ_SAFETY * best).max(LIPSCHITZ_FLOOR))
}

/// Per-iteration constants of the linear convergence analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub lipschitz: Vec<f64>,
    pub lipschitz_mean: f64,
    pub kappa: Vec<f64>,
    /// `b_i`, infinite where the gate on `eps2_i` fails.
    pub b: Vec<f64>,
    pub a: f64,
    pub tau: f64,
    pub eps2_gate_ok: Vec<bool>,
    /// No worker needed the corrected direction, so the `b` terms do not
    /// enter `a`.
    pub b_dropped: bool,
    pub rho: f64,
    pub theta: f64,
}

impl TheoryConstants {
    /// The guaranteed decrease applies only if every gate holds.
    pub fn usable(&self) -> bool {
        self.b_dropped || self.eps2_gate_ok.iter().all(|&ok| ok)
    }

    /// `tau rho theta |g|²`.
    pub fn decrease_bound(&self, grad_norm_sq: f64) -> f64 {
        self.tau * self.rho * self.theta * grad_norm_sq
    }

    /// `1 - tau rho mu theta`.
    pub fn rate_factor(&self, mu: f64) -> f64 {
        1.0 - self.tau * self.rho * mu * self.theta
    }
}

pub fn compute_theory_constants(
    lipschitz: &[f64],
    eps1: &[f64],
    eps2: &[f64],
    hp: &HyperParams,
    i_t_empty: bool,
) -> Result<TheoryConstants> {
    let m = lipschitz.len();
    if m == 0 {
        return Err(DinoError::Config("no Lipschitz constants".into()));
    }
    crate::error::check_dim(m, eps1.len())?;
    crate::error::check_dim(m, eps2.len())?;
    if let Some(l) = lipschitz.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(DinoError::Config(format!(
            "Lipschitz constant {l} is not positive"
        )));
    }
    if let Some(e) = eps1
        .iter()
        .chain(eps2)
        .find(|e| !(**e >= 0.0 && e.is_finite()))
    {
        return Err(DinoError::Config(format!(
            "solver tolerance {e} is invalid"
        )));
    }
    let phi = hp.phi;
    let mf = m as f64;
    let kappa: Vec<f64> = lipschitz
        .iter()
        .map(|l| (l * l + phi * phi) / (phi * phi))
        .collect();
    let mut b = Vec::with_capacity(m);
    let mut gate = Vec::with_capacity(m);
    for i in 0..m {
        let sk = kappa[i].sqrt();
        gate.push(eps2[i] < 1.0 / sk);
        let denom = 1.0 - eps2[i] * sk;
        if denom <= 0.0 {
            b.push(f64::INFINITY);
        } else {
            let lead = (1.0 + eps2[i] * kappa[i]) / denom;
            b.push(lead * ((1.0 + eps1[i] * kappa[i]) / phi + hp.theta) * sk);
        }
    }
    let e1k: f64 = eps1.iter().zip(&kappa).map(|(e, k)| e * k).sum::<f64>() / mf;
    let mut a = (1.0 + e1k) / phi;
    if !i_t_empty {
        a += b.iter().sum::<f64>() / mf;
    }
    let lipschitz_mean = lipschitz.iter().sum::<f64>() / mf;
    let tau = if a.is_finite() {
        2.0 * (1.0 - hp.rho) * hp.theta / (lipschitz_mean * a * a)
    } else {
        0.0
    };
    Ok(TheoryConstants {
        lipschitz: lipschitz.to_vec(),
        lipschitz_mean,
        kappa,
        b,
        a,
        tau,
        eps2_gate_ok: gate,
        b_dropped: i_t_empty,
        rho: hp.rho,
        theta: hp.theta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlViolation {
    pub t: usize,
    pub ratio: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlReport {
    pub checked: usize,
    /// Iterations skipped for lack of a gap or usable constants.
    pub skipped: usize,
    pub violations: Vec<PlViolation>,
    /// Every rate factor lay in `[0, 1)`.
    pub factors_in_range: bool,
}

impl PlReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.factors_in_range && self.checked > 0
    }
}

/// Check `f(w_{t+1}) - f* <= (1 - tau rho mu theta)(f(w_t) - f*)` on each
/// record that carries optimality gaps and usable constants.
pub fn check_pl_rate(records: &[IterationRecord], mu: f64, hp: &HyperParams) -> PlReport {
    let mut report = PlReport {
        factors_in_range: true,
        ..Default::default()
    };
    for r in records {
        let (Some(before), Some(after), Some(tau), Some(true)) =
            (r.gap_before, r.gap_after, r.tau, r.theory_usable)
        else {
            report.skipped += 1;
            continue;
        };
        // 1 - q rounds to 1 when q is below machine precision, so the range
        // check is made on q itself.
        let q = tau * hp.rho * mu * hp.theta;
        if !(q > 0.0 && q <= 1.0) {
            report.factors_in_range = false;
        }
        let factor = 1.0 - q;
        report.checked += 1;
        let bound = before - q * before;
        // Gaps at the level of roundoff carry no information.
        let slack = 1e-12 * (1.0 + r.f_before.abs());
        if after > bound + slack {
            report.violations.push(PlViolation {
                t: r.t,
                ratio: if before > 0.0 {
                    after / before
                } else {
                    f64::INFINITY
                },
                bound: factor,
            });
        }
    }
    report
}
