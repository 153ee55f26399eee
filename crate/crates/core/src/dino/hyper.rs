use serde::{Deserialize, Serialize};

use crate::error::{DinoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Required descent: `<p, g> <= -theta |g|²`.
    pub theta: f64,
    /// Damping of the least-squares sub-problems.
    pub phi: f64,
    /// Armijo sufficient-decrease parameter.
    pub rho: f64,
    /// Stop once `|g| <= delta`.
    pub delta: f64,
    pub max_iters: usize,
    /// Step sizes tried are `2^0, 2^-1, ..., 2^-backtrack_depth`.
    pub backtrack_depth: u32,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            theta: 1e-4,
            phi: 1e-6,
            rho: 1e-4,
            delta: 1e-8,
            max_iters: 100,
            backtrack_depth: 50,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            problems.push(format!("theta must be positive, got {}", self.theta));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            problems.push(format!("phi must be positive, got {}", self.phi));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            problems.push(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            problems.push(format!("delta must be >= 0, got {}", self.delta));
        }
        if self.backtrack_depth == 0 || self.backtrack_depth > 1000 {
            problems.push(format!(
                "backtrack_depth must lie in 1..=1000, got {}",
                self.backtrack_depth
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(DinoError::Config(problems.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let hp = HyperParams::default();
        assert!(hp.validate().is_ok());
        assert_eq!(hp.backtrack_depth, 50);
    }

    #[test]
    fn rejects_out_of_range() {
        let hp = HyperParams {
            theta: 0.0,
            phi: -1.0,
            rho: 1.0,
            delta: -1.0,
            backtrack_depth: 0,
            ..Default::default()
        };
        let msg = hp.validate().unwrap_err().to_string();
        for key in ["theta", "phi", "rho", "delta", "backtrack_depth"] {
            assert!(msg.contains(key), "{msg}");
        }
    }
}
