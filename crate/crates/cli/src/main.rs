use std::net::{SocketAddr, ToSocketAddrs};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dino_cli::{run_experiment, theory_report, worker_main, CliError, Overrides, RunConfig};
use dino_core::comm::TransportMode;
use dino_core::problems::{generate_classification, write_csv};

#[derive(Parser)]
#[command(
    name = "dino",
    version,
    about = "Distributed Newton-type optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Inprocess,
    Socket,
}

impl From<TransportArg> for TransportMode {
    fn from(t: TransportArg) -> Self {
        match t {
            TransportArg::Inprocess => TransportMode::InProcess,
            TransportArg::Socket => TransportMode::Socket,
        }
    }
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, env = "DINO_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    transport: Option<TransportArg>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    workers: Option<usize>,
    /// Metrics output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            transport: self.transport.map(Into::into),
            port: self.port,
            workers: self.workers,
            out: self.out.clone(),
        });
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment (the driver, in socket mode).
    Run(Common),
    /// Serve one shard to a socket-mode driver.
    Worker {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        worker_id: usize,
        /// Driver host; defaults to the config's transport host.
        #[arg(long)]
        host: Option<String>,
    },
    /// Check a metrics file against the per-iteration decrease guarantee.
    Report { metrics: PathBuf },
    /// Write a synthetic classification dataset as CSV.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        features: usize,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 1.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn resolve(host: &str, port: u16) -> Result<SocketAddr, CliError> {
    (host, port)
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| CliError::Config(vec![format!("cannot resolve {host}:{port}")]))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.load()?;
            let outcome = run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
            println!("metrics written to {}", cfg.output.path.display());
        }
        Command::Worker {
            common,
            worker_id,
            host,
        } => {
            let cfg = common.load()?;
            let host = host.unwrap_or_else(|| cfg.transport.host.clone());
            let addr = resolve(&host, cfg.transport.port)?;
            worker_main(&cfg, worker_id, addr)?;
        }
        Command::Report { metrics } => print!("{}", theory_report(metrics)?),
        Command::GenData {
            out,
            n,
            features,
            classes,
            separation,
            seed,
        } => {
            let data = generate_classification(n, features, classes, separation, seed)?;
            write_csv(&data, &out)?;
            println!("wrote {n} rows to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Config(_) | CliError::Toml(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
