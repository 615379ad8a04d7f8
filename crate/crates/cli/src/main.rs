mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "seqtransport", version, about = "Fit, sample and evaluate sequential transport maps")]
#[command(after_help = config::Config::help_text())]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct FitArgs {
    /// Configuration file; flags override its values
    #[arg(long)]
    pub config: Option<String>,
    #[arg(long)]
    pub degree: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rank of lazy layers (full layers when omitted)
    #[arg(long)]
    pub lazy_rank: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Output model file
    #[arg(long)]
    pub out: Option<String>,
    /// Output report file
    #[arg(long)]
    pub report: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a map from an unnormalized built-in target along a tempering schedule
    FitDensity {
        #[command(flatten)]
        common: FitArgs,
        /// bimodal, banana or sir
        #[arg(long)]
        target: Option<String>,
        /// Target parameter `key=value`, repeatable
        #[arg(long = "param")]
        params: Vec<String>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Reference draws per layer
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        diagnostic_samples: Option<usize>,
        /// Comma list of tempering exponents ending in 1
        #[arg(long)]
        schedule: Option<String>,
        /// `trace` or `samples`
        #[arg(long)]
        integral: Option<String>,
    },
    /// Learn a map from a CSV sample set (diffusion bridges)
    FitData {
        #[command(flatten)]
        common: FitArgs,
        #[arg(long)]
        data: String,
        #[arg(long)]
        l0: Option<usize>,
        #[arg(long)]
        layers_max: Option<usize>,
        #[arg(long)]
        enrichment: Option<usize>,
        /// `adaptive` (validation stopping) or `fixed`
        #[arg(long)]
        schedule: Option<String>,
        /// Number of layers of the fixed schedule
        #[arg(long = "L")]
        layers: Option<usize>,
        #[arg(long = "B")]
        b: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        validation_fraction: Option<f64>,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        corr_threshold: Option<f64>,
        #[arg(long)]
        discrete_max: Option<usize>,
        #[arg(long)]
        split_seed: Option<u64>,
    },
    /// Draw samples from a model
    Sample {
        #[arg(long)]
        model: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV (stdout when omitted)
        #[arg(long)]
        out: Option<String>,
    },
    /// Evaluate the model log-density at CSV rows
    Logpdf {
        #[arg(long)]
        model: String,
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: Option<String>,
    },
    /// Compute metrics of a model
    Report {
        #[arg(long)]
        model: String,
        /// Comma list of nll, ess
        #[arg(long, default_value = "nll")]
        metrics: String,
        /// CSV rows for nll
        #[arg(long)]
        data: Option<String>,
        /// Built-in target for ess
        #[arg(long)]
        target: Option<String>,
        #[arg(long = "param")]
        params: Vec<String>,
        /// Proposal draws for ess
        #[arg(long, default_value_t = 10000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the first-layer fit of a built-in target as a conic program
    ExportConic {
        #[arg(long)]
        target: String,
        #[arg(long = "param")]
        params: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 2)]
        degree: u32,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `trace` or `samples`
        #[arg(long, default_value = "trace")]
        integral: String,
        #[arg(long)]
        out: Option<String>,
    },
    /// Print a bridging schedule
    Schedule {
        /// diffusion, tempering-log or tempering-exp
        #[arg(long)]
        kind: String,
        #[arg(long = "L")]
        layers: usize,
        #[arg(long = "B", default_value_t = seqtransport::bridging::DEFAULT_B)]
        b: f64,
        #[arg(long, default_value_t = seqtransport::bridging::DEFAULT_RHO)]
        rho: f64,
        /// Constant of the logarithmic tempering schedule
        #[arg(long, default_value_t = 1.0)]
        c1: f64,
        /// Rate of the exponential tempering schedule
        #[arg(long, default_value_t = seqtransport::bridging::DEFAULT_EXP_RATE)]
        a: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
