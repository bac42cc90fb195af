//! Command-line front end: `degrade`, `enhance`, `fit` and `gradcheck`.
//!
//! Every flag can also be set through an environment variable with the
//! `DIFFISP_` prefix; flags take precedence. Logs go to standard error,
//! machine-readable results to files.

pub mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use commands::degrade::{cmd_degrade, DegradeSummary, ManifestEntry};
pub use commands::enhance::cmd_enhance;
pub use commands::fit::{cmd_fit, parse_chain_spec};
pub use commands::gradcheck::cmd_gradcheck;

/// Exit status for invalid arguments or inputs.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit status for failures while doing the work.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "diffisp", version, about = "Differentiable image filters for adverse-weather enhancement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize fog or low light over a directory of images.
    Degrade(DegradeArgs),
    /// Apply a filter chain from a parameter file.
    Enhance(EnhanceArgs),
    /// Fit chain parameters that map a degraded image onto its reference.
    Fit(FitArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Fog,
    Lowlight,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    Fog,
    Lowlight,
}

#[derive(Debug, Clone, Args)]
pub struct DegradeArgs {
    /// Directory of PNG/PPM images (or a single image).
    #[arg(long, env = "DIFFISP_INPUT")]
    pub input: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, env = "DIFFISP_OUT")]
    pub out: PathBuf,
    #[arg(long, value_enum, env = "DIFFISP_MODE")]
    pub mode: ModeArg,
    /// Fog level 0-9 (fog mode).
    #[arg(long, env = "DIFFISP_LEVEL", value_parser = clap::value_parser!(u8).range(0..=9))]
    pub level: Option<u8>,
    /// Low-light exponent (lowlight mode); drawn per image when omitted.
    #[arg(long, env = "DIFFISP_GAMMA")]
    pub gamma: Option<f64>,
    /// Condition produced by hybrid draws.
    #[arg(long, value_enum, default_value = "fog", env = "DIFFISP_DOMAIN")]
    pub domain: DomainArg,
    #[arg(long, default_value_t = 0, env = "DIFFISP_SEED")]
    pub seed: u64,
    /// Manifest path; defaults to `<out>/manifest.jsonl`.
    #[arg(long, env = "DIFFISP_MANIFEST")]
    pub manifest: Option<PathBuf>,
    /// Worker threads; defaults to the number of logical processors.
    #[arg(long, env = "DIFFISP_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EnhanceArgs {
    #[arg(long, env = "DIFFISP_INPUT")]
    pub input: PathBuf,
    /// Chain parameter file (JSON).
    #[arg(long, env = "DIFFISP_PARAMS")]
    pub params: PathBuf,
    #[arg(long, env = "DIFFISP_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long, env = "DIFFISP_DEGRADED")]
    pub degraded: PathBuf,
    #[arg(long, env = "DIFFISP_REFERENCE")]
    pub reference: PathBuf,
    /// `full` (defog + all five), `default` (without defog), `pixelwise`
    /// (wb, gamma, contrast, tone), or a comma-separated list of filter keys.
    #[arg(long, default_value = "full", env = "DIFFISP_CHAIN")]
    pub chain: String,
    #[arg(long, default_value_t = diffisp::filters::DEFAULT_TONE_KNOTS, env = "DIFFISP_TONE_KNOTS")]
    pub tone_knots: usize,
    #[arg(long, default_value_t = 500, env = "DIFFISP_ITERS")]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-2, env = "DIFFISP_LR")]
    pub lr: f64,
    /// Fit on a 256x256 downsample and apply at full resolution.
    #[arg(long, env = "DIFFISP_LOW_RES")]
    pub low_res: bool,
    /// Result file: the fitted chain plus the loss trace.
    #[arg(long, env = "DIFFISP_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 10, env = "DIFFISP_TRIALS")]
    pub trials: usize,
    #[arg(long, default_value_t = 0, env = "DIFFISP_SEED")]
    pub seed: u64,
    /// Side length of the square test images.
    #[arg(long, default_value_t = 64, env = "DIFFISP_SIZE")]
    pub size: usize,
    /// Report file (JSON).
    #[arg(long, env = "DIFFISP_OUT")]
    pub out: PathBuf,
    /// Test hook: doubles one analytic gradient (e.g. `gamma`, `wb.g`, `tone.input`).
    #[arg(long, hide = true, env = "DIFFISP_CORRUPT_VJP")]
    pub corrupt_vjp: Option<String>,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Degrade(a) => cmd_degrade(a).map(|_| ()),
        Command::Enhance(a) => cmd_enhance(a),
        Command::Fit(a) => cmd_fit(a).map(|_| ()),
        Command::Gradcheck(a) => {
            let report = cmd_gradcheck(a)?;
            print!("{}", report.table());
            if report.passed {
                Ok(())
            } else {
                let failed: Vec<String> = report
                    .failures()
                    .map(|r| format!("{} ({})", r.parameter, r.chain))
                    .collect();
                Err(CliError::Validation(format!("gradient check failed: {}", failed.join(", "))))
            }
        }
    }
}
