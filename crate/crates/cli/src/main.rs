//! `quadrbm`: oracle checks, training, calibration, sampling and shower
//! preprocessing from the command line.

mod calibrate;
mod config;
mod error;
mod output;
mod preprocess;
mod sample;
mod setup;
mod train;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use quadrbm::annealer::{LoopbackServer, VirtualAnnealer};

use crate::config::{BackendKind, RunConfig};
use crate::error::{CliError, Result};
use crate::output::OutDir;

#[derive(Debug, Parser)]
#[command(name = "quadrbm", version, about = "Quadripartite RBM experiments")]
struct Cli {
    /// Configuration file of `key = value` lines under sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    /// Remote sampler URL; implies `--backend remote` unless another is given.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an oracle suite and write a JSON report.
    Verify {
        #[arg(value_enum)]
        suite: verify::Suite,
    },
    /// Train a machine and log validation log-likelihood.
    Train,
    /// Estimate the backend's effective inverse temperature.
    Calibrate,
    /// Draw classical and annealer samples and compare energy histograms.
    Sample,
    /// Transform showers and audit the round trip.
    Preprocess {
        /// HDF5 or CSV shower file; toy showers are generated when absent.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Print the 512-bit encoding of an incident energy in MeV.
    EncodeEnergy { energy: f64 },
    /// Serve the virtual annealer over HTTP until killed.
    Serve {
        #[arg(long)]
        addr: Option<String>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(endpoint) = &cli.endpoint {
        cfg.run.endpoint = endpoint.clone();
        cfg.run.backend = BackendKind::Remote;
    }
    if let Some(backend) = cli.backend {
        cfg.run.backend = backend;
    }
    if let Some(out) = &cli.out {
        cfg.run.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Verify { suite } => {
            let out = OutDir::create(&cfg)?;
            let report = verify::run(&cfg, suite, &out)?;
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
            verify::check(&report)
        }
        Command::Train => {
            let out = OutDir::create(&cfg)?;
            let s = train::run(&cfg, &out)?;
            println!(
                "log-likelihood {:.4} -> {:.4} (gain {:.4}) in {}",
                s.initial_log_likelihood,
                s.final_log_likelihood,
                s.gain,
                out.root().display()
            );
            Ok(())
        }
        Command::Calibrate => {
            let out = OutDir::create(&cfg)?;
            let r = calibrate::run(&cfg, &out)?;
            for m in &r.methods {
                println!(
                    "{}: {}/{} converged, iterations {:.2} +- {:.2}, beta {:.4}",
                    m.method, m.converged, m.trials, m.mean_iterations, m.std_iterations, m.mean_beta_final
                );
            }
            Ok(())
        }
        Command::Sample => {
            if cli.config.is_none() {
                return Err(CliError::Usage("sample needs --config".into()));
            }
            let out = OutDir::create(&cfg)?;
            let s = sample::run(&cfg, &out)?;
            println!("{}", serde_json::to_string(&s).expect("summary serializes"));
            Ok(())
        }
        Command::Preprocess { input } => {
            let out = OutDir::create(&cfg)?;
            let audit = preprocess::run(&cfg, input.as_deref(), &out)?;
            println!("{}", serde_json::to_string(&audit).expect("audit serializes"));
            if audit.pass {
                Ok(())
            } else {
                Err(CliError::Verification("preprocessing audit failed".into()))
            }
        }
        Command::EncodeEnergy { energy } => {
            let enc = quadrbm_calo::encode_incident_energy(energy)?;
            println!("{}", enc.to_bit_string());
            Ok(())
        }
        Command::Serve { addr } => {
            if let Some(a) = addr {
                cfg.serve.addr = a;
            }
            let backend = Arc::new(VirtualAnnealer::new(cfg.annealer.clone())?);
            let server = LoopbackServer::bind(&cfg.serve.addr, backend)?;
            eprintln!("serving on {}", server.url());
            server.join();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
