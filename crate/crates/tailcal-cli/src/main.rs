//! `tailcal` — post-hoc calibration pipeline for classifiers trained on
//! long-tailed data. Subcommands cover synthetic data generation, class
//! statistics fitting, importance-weighted temperature calibration,
//! metric evaluation, reliability diagrams, alpha sweeps, and numerical
//! verification of the weight-error bound.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use tailcal::{BinScheme, Method};

use config::{CommonOpts, PipelineConfig};

/// Exit codes: 0 success, 2 validation error, 3 missing artifact,
/// 4 theory-check violation.
#[derive(Debug)]
pub struct CliFailure {
    code: i32,
    msg: String,
}

impl CliFailure {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            msg: msg.into(),
        }
    }

    pub fn missing(path: PathBuf) -> Self {
        Self {
            code: 3,
            msg: format!("missing artifact: {}", path.display()),
        }
    }

    pub fn theory(msg: impl Into<String>) -> Self {
        Self {
            code: 4,
            msg: msg.into(),
        }
    }
}

impl From<tailcal::Error> for CliFailure {
    fn from(e: tailcal::Error) -> Self {
        let code = match &e {
            tailcal::Error::MissingArtifact(_) => 3,
            _ => 2,
        };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliFailure {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: 2,
            msg: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "tailcal",
    version,
    about = "Calibrate classifiers trained on long-tailed data via head-to-tail statistics transfer and weighted temperature scaling"
)]
struct Cli {
    #[command(flatten)]
    common: CommonOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic long-tailed train/val split and balanced test split.
    Synth {
        /// Number of classes.
        #[arg(long, default_value_t = 10)]
        classes: usize,
        /// Feature dimension.
        #[arg(long, default_value_t = 16)]
        dim: usize,
        /// Imbalance factor (largest / smallest class count).
        #[arg(long, default_value_t = 100.0)]
        imbalance: f64,
        /// Count of the largest class.
        #[arg(long, default_value_t = 500)]
        max_count: u64,
        /// Overconfidence scale on the logits.
        #[arg(long, default_value_t = 2.5)]
        gamma: f64,
        /// Add log class-count prior bias to the logits.
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        prior_bias: bool,
        /// Per-class count of the balanced test split.
        #[arg(long, default_value_t = 1000)]
        test_per_class: u64,
    },
    /// Fit per-class Gaussian statistics and the head/tail partition from the training split.
    Fit,
    /// Build the transfer plan and importance weights, then fit base/plain/weighted temperatures on the validation split.
    Calibrate,
    /// Apply fitted temperatures to the test split and report ECE/SCE/ACE/accuracy.
    Evaluate {
        /// Restrict to one method (default: all of base, plain_ts, weighted_ts).
        #[arg(long)]
        method: Option<Method>,
    },
    /// Export a reliability-diagram bin table for one fitted method.
    Diagram {
        #[arg(long, default_value = "weighted_ts")]
        method: Method,
        /// equal_width or equal_mass bins.
        #[arg(long, default_value = "equal_width")]
        scheme: BinScheme,
    },
    /// Run the calibration once per alpha and write (alpha, T, test ECE) rows.
    SweepAlpha {
        /// Comma-separated alpha values.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.995,0.996,0.997,0.998,0.999,1.0"
        )]
        alphas: Vec<f64>,
    },
    /// Numerically verify the weight-error bound and the density-ratio crossover formulas.
    VerifyTheory {
        /// Monte-Carlo samples per case.
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        /// Number of random bound-check triples.
        #[arg(long, default_value_t = 20)]
        cases: u64,
    },
}

fn init_threads() -> Result<(), CliFailure> {
    if let Ok(raw) = std::env::var("TAILCAL_THREADS") {
        let n: usize = raw
            .parse()
            .map_err(|_| CliFailure::validation(format!("TAILCAL_THREADS={raw} is not a number")))?;
        if n == 0 {
            return Err(CliFailure::validation("TAILCAL_THREADS must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliFailure::validation(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliFailure> {
    let cfg = PipelineConfig::resolve(&cli.common)?;
    match cli.command {
        Command::Synth {
            classes,
            dim,
            imbalance,
            max_count,
            gamma,
            prior_bias,
            test_per_class,
        } => commands::cmd_synth(
            &cfg,
            &commands::SynthOpts {
                classes,
                dim,
                imbalance,
                max_count,
                gamma,
                prior_bias,
                test_per_class,
            },
        ),
        Command::Fit => commands::cmd_fit(&cfg),
        Command::Calibrate => commands::cmd_calibrate(&cfg),
        Command::Evaluate { method } => {
            let methods = match method {
                Some(m) => vec![m],
                None => vec![Method::Base, Method::PlainTs, Method::WeightedTs],
            };
            commands::cmd_evaluate(&cfg, &methods)
        }
        Command::Diagram { method, scheme } => commands::cmd_diagram(&cfg, method, scheme),
        Command::SweepAlpha { alphas } => commands::cmd_sweep_alpha(&cfg, &alphas),
        Command::VerifyTheory { samples, cases } => {
            commands::cmd_verify_theory(&cfg, samples, cases)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match init_threads().and_then(|()| run(cli)) {
        Ok(()) => 0,
        Err(failure) => {
            eprintln!("error: {}", failure.msg);
            failure.code
        }
    };
    std::process::exit(code);
}
