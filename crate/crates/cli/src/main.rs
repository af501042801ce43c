//! `aec` — score images with the noise-aware quality metric, sweep and plot
//! captured grids, and drive exposure control loops against synthetic,
//! replay, or surface cameras.
//!
//! Exit codes: 0 success, 2 input or parse error, 3 runtime or camera error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

/// An error carrying its process exit code.
#[derive(Debug)]
pub struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 2,
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 3,
        }
    }

    pub fn input_from(err: impl std::fmt::Display) -> Self {
        Self::input(err.to_string())
    }

    pub fn runtime_from(err: impl std::fmt::Display) -> Self {
        Self::runtime(err.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        self.code
    }
}

#[derive(Parser)]
#[command(name = "aec", version, about = "Noise-aware auto-exposure toolkit")]
struct Cli {
    /// Flat key=value run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for anything stochastic (noise injection, synthetic capture).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for output files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    // Per-field metric overrides, applied after the config file.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    n_cells: Option<usize>,
    #[arg(long, global = true)]
    p: Option<f64>,
    #[arg(long, global = true)]
    tau_l: Option<u8>,
    #[arg(long, global = true)]
    tau_h: Option<u8>,
    #[arg(long, global = true)]
    k_g: Option<f64>,
    #[arg(long, global = true)]
    k_e: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    s_floor: Option<f64>,
    #[arg(long, global = true)]
    sigma_max: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one PNM image and print the metric breakdown.
    Score {
        image: PathBuf,
        /// Also write the breakdown as a one-row CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Score every frame of a sweep manifest and rank by fused score.
    Sweep { manifest: PathBuf },
    /// Run the exposure controller against the configured camera.
    Control,
    /// Emit raw and interpolated metric surfaces for a sweep manifest.
    Surface {
        manifest: PathBuf,
        /// Comma-separated subset of gradient,entropy,noise,fused.
        #[arg(long, value_delimiter = ',')]
        terms: Vec<String>,
    },
    /// Measure noise-estimator bias/spread/MSE on a directory of images.
    NoiseEval {
        image_dir: PathBuf,
        /// Comma-separated true noise levels to inject.
        #[arg(long, value_delimiter = ',', required = true)]
        sigmas: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    let m = &mut cfg.metric;
    macro_rules! override_field {
        ($($field:ident),*) => {
            $(if let Some(v) = cli.$field { m.$field = v; })*
        };
    }
    override_field!(
        gamma, lambda, n_cells, p, tau_l, tau_h, k_g, k_e, alpha, beta, s_floor, sigma_max
    );
    m.validate().map_err(CliError::input_from)?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = build_config(cli)?;
    match &cli.command {
        Command::Score { image, csv } => commands::score(image, csv.as_deref(), &cfg),
        Command::Sweep { manifest } => commands::sweep(manifest, &cfg),
        Command::Control => commands::control(&cfg),
        Command::Surface { manifest, terms } => commands::surface(manifest, terms, &cfg),
        Command::NoiseEval {
            image_dir,
            sigmas,
            trials,
        } => commands::noise_eval(image_dir, sigmas, *trials, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.exit_code())
        }
    }
}
