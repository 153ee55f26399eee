use std::path::{Path, PathBuf};

use dino_core::comm::TransportMode;
use dino_core::dino::HyperParams;
use dino_core::solvers::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Dino,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Quadratic,
    #[default]
    Softmax,
    Nlls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// CSV file to load instead of generating data.
    pub dataset: Option<PathBuf>,
    pub n: usize,
    pub features: usize,
    pub classes: usize,
    /// Spread of the generated cluster centres.
    pub separation: f64,
    /// Softmax ℓ2 coefficient.
    pub regularization: f64,
    /// Min-max scale features to [0, 1].
    pub normalize: bool,
    /// Quadratic problems: dimension and eigenvalue range of each local matrix.
    pub dim: usize,
    pub eig_low: f64,
    pub eig_high: f64,
    /// Standard deviation of the random starting point; 0 starts at the origin.
    pub init_scale: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            kind: ProblemKind::Softmax,
            dataset: None,
            n: 1000,
            features: 20,
            classes: 10,
            separation: 1.0,
            regularization: 1e-3,
            normalize: false,
            dim: 20,
            eig_low: 0.5,
            eig_high: 5.0,
            init_scale: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f64,
    /// Fraction of each shard per stochastic gradient.
    pub batch_fraction: f64,
    pub max_iters: usize,
    pub divergence_factor: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            lr: 0.1,
            batch_fraction: 0.2,
            max_iters: 500,
            divergence_factor: 1e10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    /// Compute the per-iteration decrease bound.
    pub enabled: bool,
    /// Random points per worker for Lipschitz estimation on non-convex models.
    pub probes: usize,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            enabled: true,
            probes: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub mode: TransportMode,
    pub host: String,
    pub port: u16,
    pub timeout_secs: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            mode: TransportMode::InProcess,
            host: "127.0.0.1".into(),
            port: 7878,
            timeout_secs: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            path: PathBuf::from("metrics.jsonl"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub algorithm: Algorithm,
    pub problem: ProblemConfig,
    pub dino: HyperParams,
    pub solver: SolverConfig,
    pub sgd: SgdConfig,
    pub theory: TheoryConfig,
    pub transport: TransportConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 5,
            algorithm: Algorithm::Dino,
            problem: ProblemConfig::default(),
            dino: HyperParams::default(),
            solver: SolverConfig::default(),
            sgd: SgdConfig::default(),
            theory: TheoryConfig::default(),
            transport: TransportConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// The part of a config that determines the numbers a run produces. Where
/// the workers live and where the output goes are left out, so the same
/// run over different transports writes identical files.
#[derive(Serialize)]
pub struct Provenance<'a> {
    pub seed: u64,
    pub workers: usize,
    pub algorithm: Algorithm,
    pub problem: &'a ProblemConfig,
    pub dino: &'a HyperParams,
    pub solver: &'a SolverConfig,
    pub sgd: &'a SgdConfig,
    pub theory: &'a TheoryConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub transport: Option<TransportMode>,
    pub port: Option<u16>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.transport {
            self.transport.mode = t;
        }
        if let Some(p) = o.port {
            self.transport.port = p;
        }
        if let Some(m) = o.workers {
            self.workers = m;
        }
        if let Some(out) = &o.out {
            self.output.path = out.clone();
        }
    }

    pub fn provenance(&self) -> Provenance<'_> {
        Provenance {
            seed: self.seed,
            workers: self.workers,
            algorithm: self.algorithm,
            problem: &self.problem,
            dino: &self.dino,
            solver: &self.solver,
            sgd: &self.sgd,
            theory: &self.theory,
        }
    }

    /// Every problem with the config, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let p = &self.problem;
        if self.workers == 0 {
            errs.push("workers must be >= 1".to_string());
        }
        match p.kind {
            ProblemKind::Quadratic => {
                if p.dim == 0 {
                    errs.push("problem.dim must be >= 1".into());
                }
                if !(p.eig_low.is_finite() && p.eig_high.is_finite() && p.eig_low <= p.eig_high) {
                    errs.push(format!(
                        "problem.eig_low ({}) must not exceed problem.eig_high ({})",
                        p.eig_low, p.eig_high
                    ));
                }
            }
            ProblemKind::Softmax | ProblemKind::Nlls => {
                if p.dataset.is_none() {
                    if p.n == 0 {
                        errs.push("problem.n must be >= 1".into());
                    } else if self.workers > p.n {
                        errs.push(format!(
                            "workers ({}) exceeds problem.n ({})",
                            self.workers, p.n
                        ));
                    }
                    if p.features == 0 {
                        errs.push("problem.features must be >= 1".into());
                    }
                    if !(p.separation >= 0.0 && p.separation.is_finite()) {
                        errs.push(format!(
                            "problem.separation must be >= 0, got {}",
                            p.separation
                        ));
                    }
                }
                if p.classes < 2 {
                    errs.push(format!("problem.classes must be >= 2, got {}", p.classes));
                }
                if !(p.regularization >= 0.0 && p.regularization.is_finite()) {
                    errs.push(format!(
                        "problem.regularization must be >= 0, got {}",
                        p.regularization
                    ));
                }
            }
        }
        if !(p.init_scale >= 0.0 && p.init_scale.is_finite()) {
            errs.push(format!(
                "problem.init_scale must be >= 0, got {}",
                p.init_scale
            ));
        }
        if let Err(e) = self.dino.validate() {
            errs.push(format!("dino: {}", strip(e)));
        }
        if let Err(e) = self.solver.validate() {
            errs.push(strip(e));
        }
        let s = &self.sgd;
        if !(s.lr > 0.0 && s.lr.is_finite()) {
            errs.push(format!("sgd.lr must be positive, got {}", s.lr));
        }
        if !(s.batch_fraction > 0.0 && s.batch_fraction <= 1.0) {
            errs.push(format!(
                "sgd.batch_fraction must lie in (0, 1], got {}",
                s.batch_fraction
            ));
        }
        if !(s.divergence_factor > 1.0) {
            errs.push(format!(
                "sgd.divergence_factor must exceed 1, got {}",
                s.divergence_factor
            ));
        }
        if !(self.transport.timeout_secs > 0.0 && self.transport.timeout_secs.is_finite()) {
            errs.push(format!(
                "transport.timeout_secs must be positive, got {}",
                self.transport.timeout_secs
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errs))
        }
    }
}

fn strip(e: dino_core::DinoError) -> String {
    match e {
        dino_core::DinoError::Config(s) => s,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.problem.kind = ProblemKind::Nlls;
        cfg.dino.theta = 1e-2;
        cfg.transport.mode = TransportMode::Socket;
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn parses_nested_sections() {
        let cfg = RunConfig::from_toml(
            r#"
            seed = 9
            workers = 3
            algorithm = "sgd"
            [problem]
            kind = "quadratic"
            dim = 7
            [dino]
            phi = 0.5
            [transport]
            mode = "socket"
            port = 9000
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.algorithm, Algorithm::Sgd);
        assert_eq!(cfg.problem.kind, ProblemKind::Quadratic);
        assert_eq!(cfg.problem.dim, 7);
        assert_eq!(cfg.dino.phi, 0.5);
        assert_eq!(cfg.dino.theta, HyperParams::default().theta);
        assert_eq!(cfg.transport.port, 9000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[dino]\ntheat = 1.0").is_err());
        assert!(RunConfig::from_toml("wokers = 2").is_err());
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut cfg = RunConfig::default();
        cfg.workers = 0;
        cfg.dino.theta = -1.0;
        cfg.dino.rho = 2.0;
        cfg.solver.max_iters = 0;
        cfg.sgd.lr = 0.0;
        cfg.problem.classes = 1;
        let CliError::Config(errs) = cfg.validate().unwrap_err() else {
            panic!("expected config error");
        };
        let text = errs.join("\n");
        for key in ["workers", "theta", "rho", "max_iters", "sgd.lr", "classes"] {
            assert!(text.contains(key), "missing {key} in {text}");
        }
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides {
            seed: Some(3),
            transport: Some(TransportMode::Socket),
            port: Some(1234),
            workers: Some(2),
            out: Some("x.jsonl".into()),
        });
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.transport.mode, TransportMode::Socket);
        assert_eq!(cfg.transport.port, 1234);
        assert_eq!(cfg.workers, 2);
        assert_eq!(cfg.output.path, PathBuf::from("x.jsonl"));
    }
}
