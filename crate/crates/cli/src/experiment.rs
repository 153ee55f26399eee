use std::net::SocketAddr;
use std::time::{Duration, Instant};

use dino_core::comm::{InProcessTransport, SocketListener, Transport, TransportMode};
use dino_core::dino::{
    check_pl_rate, dino_run, sgd_baseline_run, PlReport, RunOptions, RunOutcome, RunStatus,
    SgdOutcome, SgdParams, WorkerNode, WorkerSettings,
};
use dino_core::problems::LossModel;
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, ProblemKind, RunConfig};
use crate::error::{CliError, Result};
use crate::metrics::MetricsWriter;
use crate::problem::{build_problem, Problem, Seeds};

/// Slack on the per-iteration decrease bound, relative to `|f(w_t)|`.
pub const THEORY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TheorySummary {
    /// Iterations whose constants were computed.
    pub iterations: usize,
    /// Iterations where every solver-accuracy gate held.
    pub gates_passed: usize,
    /// Gated iterations whose decrease met the guaranteed bound.
    pub decrease_within_bound: usize,
    pub line_search_exhausted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub status: Option<RunStatus>,
    pub error: Option<String>,
    pub iterations: usize,
    /// Rounds spent by the optimizer itself.
    pub algorithm_rounds: u64,
    /// Including one-off setup exchanges.
    pub total_rounds: u64,
    pub total_bytes: u64,
    pub final_f: Option<f64>,
    pub final_grad_norm: Option<f64>,
    pub theory: Option<TheorySummary>,
    pub pl: Option<PlReport>,
}

pub struct ExperimentOutcome {
    pub summary: RunSummary,
    pub dino: Option<RunOutcome>,
    pub sgd: Option<SgdOutcome>,
}

pub fn worker_settings(cfg: &RunConfig) -> WorkerSettings {
    WorkerSettings {
        hp: cfg.dino,
        solver: cfg.solver,
        batch_fraction: cfg.sgd.batch_fraction,
        seed: Seeds::from_run(cfg.seed).workers,
    }
}

pub fn timeout(cfg: &RunConfig) -> Duration {
    Duration::from_secs_f64(cfg.transport.timeout_secs)
}

pub fn inprocess_transport(
    cfg: &RunConfig,
    problem: &Problem,
) -> Result<InProcessTransport<WorkerNode<LossModel>>> {
    let m = problem.models.len();
    let settings = worker_settings(cfg);
    let workers = problem
        .models
        .iter()
        .enumerate()
        .map(|(i, model)| WorkerNode::new(i, m, model.clone(), settings))
        .collect::<dino_core::Result<Vec<_>>>()?;
    Ok(InProcessTransport::new(workers)?)
}

fn theory_summary(outcome: &RunOutcome) -> Option<TheorySummary> {
    outcome.lipschitz.as_ref()?;
    let mut s = TheorySummary::default();
    for r in &outcome.records {
        s.iterations += 1;
        if r.line_search_exhausted {
            s.line_search_exhausted += 1;
        }
        if let Some(bound) = r.decrease_bound {
            s.gates_passed += 1;
            if r.f_after <= r.f_before - bound + THEORY_TOLERANCE * r.f_before.abs() {
                s.decrease_within_bound += 1;
            }
        }
    }
    Some(s)
}

/// Run the configured optimizer over `transport`, writing metrics as it
/// goes. On failure the metrics file still ends in a summary line carrying
/// the error.
pub fn execute<T: Transport + ?Sized>(
    cfg: &RunConfig,
    problem: &Problem,
    transport: &mut T,
) -> Result<ExperimentOutcome> {
    let mut metrics = MetricsWriter::create(&cfg.output.path)?;
    metrics.config(cfg)?;
    let started = Instant::now();
    let result = run_algorithm(cfg, problem, transport);
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            let ledger = transport.ledger();
            let summary = RunSummary {
                algorithm: cfg.algorithm,
                status: None,
                error: Some(e.to_string()),
                iterations: 0,
                algorithm_rounds: ledger.algorithm_rounds(),
                total_rounds: ledger.rounds(),
                total_bytes: ledger.bytes_sent(),
                final_f: None,
                final_grad_norm: None,
                theory: None,
                pl: None,
            };
            metrics.summary(&summary)?;
            metrics.finish()?;
            return Err(e);
        }
    };
    if let Some(d) = &outcome.dino {
        for r in &d.records {
            metrics.iteration(r)?;
        }
    }
    if let Some(s) = &outcome.sgd {
        for r in &s.records {
            metrics.sgd_iteration(r)?;
        }
    }
    metrics.summary(&outcome.summary)?;
    metrics.finish()?;
    info!(
        "{:?} finished in {:.2}s: {} iterations, {} rounds, final f = {:?}",
        cfg.algorithm,
        started.elapsed().as_secs_f64(),
        outcome.summary.iterations,
        outcome.summary.algorithm_rounds,
        outcome.summary.final_f
    );
    Ok(outcome)
}

fn run_algorithm<T: Transport + ?Sized>(
    cfg: &RunConfig,
    problem: &Problem,
    transport: &mut T,
) -> Result<ExperimentOutcome> {
    match cfg.algorithm {
        Algorithm::Dino => {
            let gap_fn;
            let mut opts = RunOptions {
                seed: Seeds::from_run(cfg.seed).lipschitz,
                ..Default::default()
            };
            if let Some(oracle) = &problem.oracle {
                gap_fn = move |w: &[f64]| oracle.gap(w);
                opts.gap = Some(&gap_fn);
            }
            if cfg.theory.enabled {
                match (&problem.oracle, cfg.problem.kind) {
                    (Some(oracle), ProblemKind::Quadratic) => {
                        opts.lipschitz = Some(oracle.local_smoothness().to_vec());
                    }
                    _ => opts.lipschitz_probes = Some(cfg.theory.probes),
                }
            }
            let out = dino_run(transport, &problem.w0, &cfg.dino, &opts)?;
            let pl = problem
                .oracle
                .as_ref()
                .filter(|_| cfg.theory.enabled)
                .map(|o| check_pl_rate(&out.records, o.mu(), &cfg.dino));
            let summary = RunSummary {
                algorithm: Algorithm::Dino,
                status: Some(out.status),
                error: None,
                iterations: out.records.len(),
                algorithm_rounds: out.ledger.algorithm_rounds(),
                total_rounds: out.ledger.rounds(),
                total_bytes: out.ledger.bytes_sent(),
                final_f: out.final_f,
                final_grad_norm: out.last_grad_norm,
                theory: theory_summary(&out),
                pl,
            };
            Ok(ExperimentOutcome {
                summary,
                dino: Some(out),
                sgd: None,
            })
        }
        Algorithm::Sgd => {
            let params = SgdParams {
                lr: cfg.sgd.lr,
                max_iters: cfg.sgd.max_iters,
                divergence_factor: cfg.sgd.divergence_factor,
            };
            let out = sgd_baseline_run(transport, &problem.w0, &params)?;
            let last = out.records.last();
            let summary = RunSummary {
                algorithm: Algorithm::Sgd,
                status: Some(out.status),
                error: None,
                iterations: out.records.len(),
                algorithm_rounds: out.ledger.algorithm_rounds(),
                total_rounds: out.ledger.rounds(),
                total_bytes: out.ledger.bytes_sent(),
                final_f: last.map(|r| r.f),
                final_grad_norm: last.map(|r| r.grad_norm),
                theory: None,
                pl: None,
            };
            Ok(ExperimentOutcome {
                summary,
                dino: None,
                sgd: Some(out),
            })
        }
    }
}

/// Validate, build the problem and run it over the configured transport.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    match cfg.transport.mode {
        TransportMode::InProcess => {
            let problem = build_problem(cfg)?;
            let mut transport = inprocess_transport(cfg, &problem)?;
            execute(cfg, &problem, &mut transport)
        }
        TransportMode::Socket => {
            let listener = SocketListener::bind(cfg.transport.port)?;
            driver_main(cfg, listener)
        }
    }
}

/// Socket-mode driver: wait for every worker, then run.
pub fn driver_main(cfg: &RunConfig, listener: SocketListener) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    info!(
        "driver listening on {}, waiting for {} workers",
        listener.local_addr()?,
        cfg.workers
    );
    let mut transport = listener.accept_workers(&problem.checksums(), timeout(cfg))?;
    transport.set_read_timeout(Some(timeout(cfg)))?;
    let result = execute(cfg, &problem, &mut transport);
    let closed = transport.shutdown();
    let outcome = result?;
    closed?;
    Ok(outcome)
}

/// Socket-mode worker: build this worker's shard and serve the driver.
pub fn worker_main(cfg: &RunConfig, worker_id: usize, driver: SocketAddr) -> Result<()> {
    cfg.validate()?;
    if worker_id >= cfg.workers {
        return Err(CliError::Config(vec![format!(
            "worker id {worker_id} out of range for {} workers",
            cfg.workers
        )]));
    }
    let problem = build_problem(cfg)?;
    let model = problem.models[worker_id].clone();
    let checksum = model.checksum();
    let mut node = WorkerNode::new(worker_id, cfg.workers, model, worker_settings(cfg))?;
    info!("worker {worker_id} connecting to {driver}");
    dino_core::comm::run_socket_worker(
        driver,
        worker_id,
        cfg.workers,
        checksum,
        &mut node,
        timeout(cfg),
    )?;
    Ok(())
}
