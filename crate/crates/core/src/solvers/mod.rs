//! Inexact solvers for the two local sub-problems.
//!
//! * [`solve_v1`] approximates the damped least-squares solution
//!   `argmin |H v - g|² + phi² |v|²` with LSMR.
//! * [`solve_v2`] approximates `(H² + phi² I)⁻¹ g` with CG from a zero start.
//!
//! Both return a [`SolverCertificate`] whose residual ratios are recomputed
//! from the returned vector with fresh operator applications, so they can be
//! checked independently of the solver internals.

mod cg;
mod lsmr;

pub use cg::solve_v2;
pub use lsmr::solve_v1;

use serde::{Deserialize, Serialize};

use crate::error::{DinoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop LSMR once the normal-equation residual ratio reaches this.
    pub eps1_target: f64,
    /// Stop CG once the residual ratio reaches this.
    pub eps2_target: f64,
    /// Per-coordinate floor; right-hand sides with norm below
    /// `abs_floor * d` are treated as zero.
    pub abs_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 50,
            eps1_target: 0.0,
            eps2_target: 0.0,
            abs_floor: 1e-300,
        }
    }
}

impl SolverConfig {
    pub fn with_max_iters(max_iters: usize) -> Self {
        SolverConfig {
            max_iters,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.max_iters == 0 {
            problems.push("solver max_iters must be >= 1".to_string());
        }
        for (name, eps) in [
            ("eps1_target", self.eps1_target),
            ("eps2_target", self.eps2_target),
        ] {
            if !(0.0..1.0).contains(&eps) {
                problems.push(format!("solver {name} must lie in [0, 1), got {eps}"));
            }
        }
        if !(self.abs_floor > 0.0 && self.abs_floor.is_finite()) {
            problems.push(format!(
                "solver abs_floor must be positive, got {}",
                self.abs_floor
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(DinoError::Config(problems.join("; ")))
        }
    }

    pub(crate) fn floor(&self, dim: usize) -> f64 {
        self.abs_floor * dim as f64
    }
}

/// Realized inexactness of one worker's sub-problem solutions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverCertificate {
    /// `|(H² + phi² I) v1 - H g| / |H g|`
    pub residual_ratio_1: Option<f64>,
    /// `|(H² + phi² I) v2 - g| / |g|`
    pub residual_ratio_2: Option<f64>,
    /// `<v2, g>`
    pub inner_product_2: Option<f64>,
    pub iters_used_1: usize,
    pub iters_used_2: usize,
    /// `|H g|` fell below the floor and `v1 = 0` was returned.
    pub degenerate_rhs: bool,
}

impl SolverCertificate {
    /// Combine the v1 certificate with a later v2 certificate.
    pub fn merge(self, v2: SolverCertificate) -> SolverCertificate {
        SolverCertificate {
            residual_ratio_2: v2.residual_ratio_2,
            inner_product_2: v2.inner_product_2,
            iters_used_2: v2.iters_used_2,
            ..self
        }
    }
}

/// The realized `(eps1, eps2)`. A sub-problem that was never solved
/// contributes 0.
pub fn achieved_epsilons(cert: &SolverCertificate) -> (f64, f64) {
    (
        cert.residual_ratio_1.unwrap_or(0.0),
        cert.residual_ratio_2.unwrap_or(0.0),
    )
}
