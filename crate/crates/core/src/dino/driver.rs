use log::{debug, info, warn};

use super::direction::{check_descent, mean_in_order};
use super::{
    compute_theory_constants, HyperParams, IterationRecord, RunOutcome, RunStatus,
    ROUNDS_PER_ITERATION, TELEMETRY_WIDTH,
};
use crate::comm::{Phase, Transport};
use crate::error::{DinoError, Result};
use crate::linops::ParameterVector;
use crate::vector;

/// Optional extras for [`dino_run`].
#[derive(Default)]
pub struct RunOptions<'a> {
    /// Known local Lipschitz constants; skips estimation.
    pub lipschitz: Option<Vec<f64>>,
    /// Estimate the local Lipschitz constants in one setup exchange, using
    /// this many probe points on non-convex models.
    pub lipschitz_probes: Option<usize>,
    pub seed: u64,
    /// `w -> f(w) - f*`, for rate checks.
    pub gap: Option<&'a dyn Fn(&[f64]) -> f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    pub f_next: f64,
    /// No grid step satisfied the Armijo condition.
    pub exhausted: bool,
}

/// Pick the largest `alpha = 2^-k` with
/// `f(w + alpha p) <= f(w) + alpha rho <p, g>`, in one broadcast and one
/// reduce: every worker evaluates its loss on the whole grid at once.
pub fn distributed_line_search<T: Transport + ?Sized>(
    transport: &mut T,
    iteration: u32,
    w: &[f64],
    p: &[f64],
    g: &[f64],
    f_t: f64,
    hp: &HyperParams,
) -> Result<LineSearchOutcome> {
    let dot = vector::dot(p, g);
    if !(dot < 0.0) {
        return Err(DinoError::Invariant(format!(
            "line search along a non-descent direction, <p, g> = {dot:e}"
        )));
    }
    let depth = hp.backtrack_depth;
    let mut payload = Vec::with_capacity(2 * w.len() + 1);
    payload.extend_from_slice(w);
    payload.extend_from_slice(p);
    payload.push(depth as f64);
    transport.broadcast(Phase::LineSearch, iteration, &payload)?;
    let sum = transport.reduce_sum(Phase::LineSearch, iteration)?;
    if sum.len() != depth as usize + 2 {
        return Err(DinoError::Protocol(format!(
            "line search reduce has {} values, expected {}",
            sum.len(),
            depth + 2
        )));
    }
    let vals = mean_in_order(&sum, transport.workers());
    for k in 0..=depth {
        let alpha = (-(k as f64)).exp2();
        let f = vals[1 + k as usize];
        if f <= f_t + alpha * hp.rho * dot {
            return Ok(LineSearchOutcome {
                alpha,
                f_next: f,
                exhausted: false,
            });
        }
    }
    let alpha = (-(depth as f64)).exp2();
    warn!("iteration {iteration}: no Armijo step on the grid, taking alpha = {alpha:e}");
    Ok(LineSearchOutcome {
        alpha,
        f_next: vals[1 + depth as usize],
        exhausted: true,
    })
}

struct Telemetry {
    enforced: Vec<bool>,
    eps1: Vec<f64>,
    eps2: Vec<f64>,
    lambda_max: f64,
    degenerate: usize,
}

fn unpack_telemetry(slots: &[f64], m: usize) -> Result<Telemetry> {
    if slots.len() != m * TELEMETRY_WIDTH {
        return Err(DinoError::Protocol(format!(
            "direction telemetry has {} values, expected {}",
            slots.len(),
            m * TELEMETRY_WIDTH
        )));
    }
    let mut t = Telemetry {
        enforced: Vec::with_capacity(m),
        eps1: Vec::with_capacity(m),
        eps2: Vec::with_capacity(m),
        lambda_max: 0.0,
        degenerate: 0,
    };
    for s in slots.chunks(TELEMETRY_WIDTH) {
        t.enforced.push(s[0] > 0.5);
        t.eps1.push(s[1]);
        t.eps2.push(s[2]);
        t.lambda_max = t.lambda_max.max(s[3]);
        if s[4] > 0.5 {
            t.degenerate += 1;
        }
    }
    Ok(t)
}

/// Run the optimizer from `w0` over the workers behind `transport`.
pub fn dino_run<T: Transport + ?Sized>(
    transport: &mut T,
    w0: &ParameterVector,
    hp: &HyperParams,
    opts: &RunOptions<'_>,
) -> Result<RunOutcome> {
    hp.validate()?;
    let m = transport.workers();
    let d = w0.dim();
    let mut w = w0.as_slice().to_vec();

    let lipschitz = match (&opts.lipschitz, opts.lipschitz_probes) {
        (Some(l), _) => {
            crate::error::check_dim(m, l.len())?;
            Some(l.clone())
        }
        (None, Some(probes)) => {
            let mut payload = w.clone();
            payload.push(probes as f64);
            payload.push(f64::from_bits(opts.seed));
            transport.broadcast(Phase::Setup, 0, &payload)?;
            let l = transport.reduce_sum(Phase::Setup, 0)?;
            crate::error::check_dim(m, l.len())?;
            info!("local Lipschitz estimates: {l:?}");
            Some(l)
        }
        (None, None) => None,
    };

    let mut records = Vec::new();
    let mut status = RunStatus::MaxIters;
    let mut final_f = None;
    let mut last_grad_norm = None;

    for t in 0..hp.max_iters {
        let it = t as u32;
        let rounds_start = transport.ledger().algorithm_rounds();

        transport.broadcast(Phase::Grad, it, &w)?;
        let sum = transport.reduce_sum(Phase::Grad, it)?;
        crate::error::check_dim(d + 1, sum.len())?;
        let mean = mean_in_order(&sum, m);
        let (g, f) = (&mean[..d], mean[d]);
        if !f.is_finite() || !vector::all_finite(g) {
            return Err(DinoError::non_finite(format!(
                "global gradient at iteration {t}"
            )));
        }
        let g_sq = vector::norm_sq(g);
        let grad_norm = g_sq.sqrt();
        final_f = Some(f);
        last_grad_norm = Some(grad_norm);
        if grad_norm <= hp.delta {
            info!(
                "iteration {t}: |g| = {grad_norm:e} <= {:e}, stopping",
                hp.delta
            );
            status = RunStatus::Converged;
            break;
        }

        transport.broadcast(Phase::Direction, it, g)?;
        let sum = transport.reduce_sum(Phase::Direction, it)?;
        if sum.len() < d {
            return Err(DinoError::Protocol(format!(
                "direction reduce has {} values",
                sum.len()
            )));
        }
        let p = mean_in_order(&sum[..d], m);
        let tel = unpack_telemetry(&sum[d..], m)?;
        let descent_dot = check_descent(&p, g, hp.theta)?;

        let ls = distributed_line_search(transport, it, &w, &p, g, f, hp)?;
        let gap_before = opts.gap.map(|gap| gap(&w));
        for (wi, pi) in w.iter_mut().zip(&p) {
            *wi += ls.alpha * pi;
        }
        let gap_after = opts.gap.map(|gap| gap(&w));
        final_f = Some(ls.f_next);

        let rounds = transport.ledger().algorithm_rounds();
        if rounds - rounds_start != ROUNDS_PER_ITERATION {
            return Err(DinoError::Invariant(format!(
                "iteration {t} used {} rounds",
                rounds - rounds_start
            )));
        }

        let i_t_size = tel.enforced.iter().filter(|&&e| e).count();
        let theory = match &lipschitz {
            Some(l) => {
                // Workers outside the descent set never solve for v2.
                let eps2: Vec<f64> = tel
                    .eps2
                    .iter()
                    .zip(&tel.enforced)
                    .map(|(e, &on)| if on { *e } else { 0.0 })
                    .collect();
                Some(compute_theory_constants(
                    l,
                    &tel.eps1,
                    &eps2,
                    hp,
                    i_t_size == 0,
                )?)
            }
            None => None,
        };
        let usable = theory.as_ref().map(|c| c.usable());
        let record = IterationRecord {
            t,
            f_before: f,
            f_after: ls.f_next,
            grad_norm,
            alpha: ls.alpha,
            line_search_exhausted: ls.exhausted,
            descent_dot,
            i_t_size,
            degenerate_rhs: tel.degenerate,
            eps1: tel.eps1,
            eps2: tel.eps2,
            lambda_max: tel.lambda_max,
            rounds_so_far: rounds,
            bytes_so_far: transport.ledger().bytes_sent(),
            tau: theory.as_ref().map(|c| c.tau),
            a: theory.as_ref().map(|c| c.a),
            theory_usable: usable,
            decrease_bound: theory
                .as_ref()
                .filter(|c| c.usable())
                .map(|c| c.decrease_bound(g_sq)),
            gap_before,
            gap_after,
        };
        debug!(
            "iteration {t}: f = {f:.6e} -> {:.6e}, |g| = {grad_norm:.3e}, alpha = {:e}, |I_t| = {i_t_size}",
            ls.f_next, ls.alpha
        );
        records.push(record);
    }

    Ok(RunOutcome {
        w,
        records,
        status,
        final_f,
        last_grad_norm,
        lipschitz,
        ledger: transport.ledger().clone(),
    })
}
