//! Configuration, dispatch and artifact emission for the `galerkin-lab` binary.

pub mod cli;
pub mod commands;
pub mod config;
pub mod output;

use std::io;
use std::path::PathBuf;
use std::time::Instant;

use galerkin_core::exec::Execution;
use galerkin_core::experiments::CheckReport;
use serde_json::json;

use cli::{Cli, Command, OUT_DIR_ENV};
use config::{emit_config, parse_config, ConfigError, RunConfig};
use output::{ArtifactSink, Manifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] galerkin_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(galerkin_core::Error::InvalidParameter { .. } | galerkin_core::Error::InvalidConfig(_)) => {
                EXIT_CONFIG
            }
            CliError::Core(_) => EXIT_RUNTIME,
            CliError::Io(_) => EXIT_IO,
        }
    }

    /// Machine-readable description printed on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let (kind, path) = match self {
            CliError::Config(ConfigError::Parse(_)) => ("parse_error", None),
            CliError::Config(ConfigError::Validation { path, .. }) => ("validation_error", Some(path.clone())),
            CliError::Core(galerkin_core::Error::InvalidParameter { field, .. }) => {
                ("validation_error", Some(field.to_string()))
            }
            CliError::Core(_) => ("runtime_error", None),
            CliError::Io(_) => ("io_error", None),
        };
        json!({ "pass": false, "error": { "kind": kind, "path": path, "message": self.to_string() } })
    }
}

/// Folds the command-line overrides into the configuration.
pub fn apply_overrides(cfg: &mut RunConfig, cli: &Cli) {
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    match &cli.command {
        Command::Qtable { ratios: Some(n) } => cfg.experiment.qtable_ratios = *n,
        Command::Inviscid { eps: Some(grid) } => cfg.experiment.eps_grid = grid.clone(),
        Command::Equilibrate { eta, t_grid } => {
            if let Some(eta) = eta {
                cfg.experiment.eta = *eta;
            }
            if let Some(grid) = t_grid {
                cfg.experiment.t_grid = grid.clone();
            }
        }
        _ => {}
    }
}

pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    apply_overrides(&mut cfg, cli);
    cfg.validate()?;
    Ok(cfg)
}

/// `--out`, then the environment variable, then `output.directory`.
pub fn output_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory))
}

pub struct RunOutcome {
    pub manifest: Manifest,
    pub reports: Vec<CheckReport>,
}

/// Runs one command end to end and writes the manifest.
pub fn execute(cli: &Cli) -> Result<RunOutcome, CliError> {
    let started = Instant::now();
    let cfg = load_config(cli)?;
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| io::Error::other(e.to_string()))?;
    let mut sink = ArtifactSink::create(output_dir(cli, &cfg))?;
    sink.write_bytes("config.json", emit_config(&cfg).as_bytes())?;
    let reports = pool.install(|| {
        let mut ctx = commands::Context { cfg: &cfg, exec: Execution::default(), sink: &mut sink };
        commands::dispatch(&cli.command, &mut ctx)
    })?;
    let pass = reports.iter().all(|r| r.pass);
    if !reports.is_empty() {
        sink.write_json("reports.json", &json!({ "pass": pass, "checks": reports }))?;
    }
    let manifest = sink.finish(Manifest {
        command: cli.command.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        seed: cfg.sim.seed,
        threads,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        pass,
        artifacts: Vec::new(),
    })?;
    Ok(RunOutcome { manifest, reports })
}

/// Exit status of a run; failures are reported as JSON on stderr.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(out) if out.manifest.pass => EXIT_OK,
        Ok(out) => {
            let failed: Vec<&CheckReport> = out.reports.iter().filter(|r| !r.pass).collect();
            eprintln!("{}", json!({ "pass": false, "failed_checks": failed }));
            EXIT_CHECK_FAILED
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
