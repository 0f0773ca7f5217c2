use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use holin_core::config::{DataSource, ExperimentConfig, PipelineMode};
use holin_core::invert::Method;
use holin_core::pipeline::{self, PipelineError, Stage};
use holin_core::Error;

#[derive(Parser)]
#[command(name = "holin", version, about = "Potential reconstruction from linearized nonlinear boundary data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: forward sweeps, noise, SG differentiation, inversion.
    Run(Common),
    /// Inversion only, on oracle Fourier data or a sweep archive.
    Invert {
        #[command(flatten)]
        common: Common,
        /// Use the Fourier oracle of the configured potential as data.
        #[arg(long, conflicts_with = "archive")]
        oracle: bool,
        /// Use the sweeps of an earlier full run as data.
        #[arg(long)]
        archive: Option<PathBuf>,
    },
    /// Reconstruct over a λ ladder and write the L-curve table.
    SweepLambda {
        #[command(flatten)]
        common: Common,
        /// Comma-separated λ values (overrides inversion.lambdas).
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
    },
    /// Dump the exact Fourier data of the configured potential.
    Oracle(Common),
    /// Print mesh and finite-element space statistics as JSON.
    MeshInfo(Common),
    /// Print the default configuration.
    DefaultConfig,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file (defaults apply when omitted).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set mesh.radial_resolution=48.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Run everything on the calling thread.
    #[arg(long)]
    sequential: bool,
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "tikhonov" => Ok(Method::Tikhonov),
        "tv" => Ok(Method::Tv),
        _ => Err(format!("unknown method {s:?} (tikhonov | tv)")),
    }
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, PipelineError> {
        let base = match &self.config {
            Some(path) => std::fs::read_to_string(path).map_err(|e| config_error(Error::Io(e)))?,
            None => ExperimentConfig::default().to_toml(),
        };
        let mut cfg = ExperimentConfig::from_toml_with_overrides(&base, &self.overrides).map_err(config_error)?;
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.noise.seed = s;
        }
        if let Some(r) = self.rho {
            cfg.noise.rho = r;
        }
        if let Some(l) = self.lambda {
            cfg.inversion.lambda = l;
        }
        if let Some(m) = self.method {
            cfg.inversion.method = m;
        }
        if let Some(t) = self.threads {
            cfg.execution.threads = t;
        }
        if self.sequential {
            cfg.execution.parallel = false;
        }
        Ok(cfg)
    }
}

fn config_error(e: Error) -> PipelineError {
    PipelineError { stage: Stage::Config, source: e }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializes")
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run(common) => {
            let mut cfg = common.load()?;
            cfg.mode = PipelineMode::Full;
            cfg.data.source = DataSource::Sweeps;
            let out = pipeline::run_full(&cfg)?;
            println!("{}", json(&out.summary));
        }
        Command::Invert { common, oracle, archive } => {
            let mut cfg = common.load()?;
            cfg.mode = PipelineMode::InversionOnly;
            if oracle {
                cfg.data.source = DataSource::Oracle;
            }
            if let Some(a) = archive {
                cfg.data.source = DataSource::Archive;
                cfg.data.archive = Some(a);
            }
            let out = pipeline::run_inversion_only(&cfg)?;
            println!("{}", json(&out.summary));
        }
        Command::SweepLambda { common, lambdas } => {
            let mut cfg = common.load()?;
            if !lambdas.is_empty() {
                cfg.inversion.lambdas = lambdas;
            }
            let rows = pipeline::sweep_lambda(&cfg)?;
            println!("{}", json(&rows));
        }
        Command::Oracle(common) => {
            let cfg = common.load()?;
            pipeline::oracle_dump(&cfg)?;
            println!("{}", cfg.output_dir.join(pipeline::ORACLE_FILE).display());
        }
        Command::MeshInfo(common) => {
            let cfg = common.load()?;
            println!("{}", json(&pipeline::mesh_info(&cfg)?));
        }
        Command::DefaultConfig => print!("{}", ExperimentConfig::default().to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {}", e.stage, e.source);
            ExitCode::FAILURE
        }
    }
}
