//! `goosewatch`: file-based GOOSE anomaly detection workflow.
//!
//! Stages: `synth` (scenario to pcap), `extract` (pcap to features),
//! `train` (normal features to profile), `detect`, `eval` and `latent`.

mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "goosewatch", version, about = "Dual-view autoencoder anomaly detection for IEC 61850 GOOSE traffic")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic capture and its label file from a scenario.
    Synth {
        scenario: PathBuf,
        out_dir: PathBuf,
    },
    /// Window a capture and write its feature matrix.
    Extract {
        pcap: PathBuf,
        out: PathBuf,
        /// Ground-truth intervals (start_s,end_s,kind); windows stay unlabeled without it.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Window length in seconds.
        #[arg(long = "tw", default_value_t = 1.0)]
        t_w: f64,
        /// Window stride in seconds (default: tumbling windows).
        #[arg(long)]
        stride: Option<f64>,
        /// `train` flags constant columns in the sidecar; `infer` does not.
        #[arg(long, value_enum, default_value_t = ScopeArg::Train)]
        scope: ScopeArg,
    },
    /// Train autoencoders and thresholds on a normal-only feature matrix.
    Train {
        features: PathBuf,
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ViewArg::Both)]
        view: ViewArg,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a feature matrix against a profile.
    Detect {
        profile: PathBuf,
        features: PathBuf,
        out_dir: PathBuf,
    },
    /// Compute detection metrics from labeled verdicts.
    Eval {
        verdicts: PathBuf,
        /// Report path (default: report.csv next to the verdicts).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write bottleneck coordinates of every window.
    Latent {
        profile: PathBuf,
        features: PathBuf,
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScopeArg {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ViewArg {
    Seq,
    Temp,
    Both,
}

/// Run configuration overrides; each flag mirrors a configuration field.
#[derive(Debug, Clone, Default, Args)]
struct ConfigArgs {
    /// JSON configuration file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Window length in seconds (default: taken from the feature matrix).
    #[arg(long = "tw")]
    t_w: Option<f64>,
    #[arg(long)]
    stride: Option<f64>,
    /// Sequence-view layer sizes, e.g. 6,16,8,3,8,16,6.
    #[arg(long, value_delimiter = ',')]
    seq_dims: Option<Vec<usize>>,
    /// Temporal-view layer sizes, e.g. 8,8,2,8,8.
    #[arg(long, value_delimiter = ',')]
    temp_dims: Option<Vec<usize>>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    val_frac: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    /// Quantile of the training errors used as the initial tail threshold.
    #[arg(long)]
    u_quantile: Option<f64>,
    /// Target false-alarm risk of the final threshold.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, env = "GOOSEWATCH_SEED")]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            e.code.into()
        }
    }
}
