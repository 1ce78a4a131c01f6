use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "sumformer", version, about = "Super-multivariate forecasting of grid mobility data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model from a `key = value` config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override one config key, e.g. `--set d_model=64`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Train once per value, e.g. `--sweep l_seg=4,8,16`; each run
        /// writes to `<out_dir>/<key>=<value>`.
        #[arg(long, value_name = "KEY=V1,V2,..")]
        sweep: Option<String>,
    },
    /// Score a checkpoint on the test windows of a series.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// `T_in-horizon`; must match the checkpoint.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "7:1:2")]
        split: String,
        /// Write the report CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic periodic grid series.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// `T,C,H,W`.
        #[arg(long)]
        dims: String,
        #[arg(long, default_value_t = 48)]
        steps_per_day: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time inter-series attention forwards across variable counts.
    Bench {
        #[arg(long, default_value = "full,dictionary,lowrank,additive")]
        mechanisms: String,
        #[arg(long, default_value = "512,1024,2048")]
        g_sizes: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 32)]
        d_model: usize,
        /// Dictionary size and projection rank.
        #[arg(long, default_value_t = 64)]
        dict_size: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a heuristic or linear baseline on the test windows.
    Baseline {
        #[arg(long)]
        method: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "128-128")]
        scenario: String,
        #[arg(long, default_value = "7:1:2")]
        split: String,
        /// Training settings for Nlinear.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one variable's inter-series attention row as CSV.
    ExportAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        variable: usize,
        #[arg(long)]
        out: PathBuf,
        /// Series to read the input window from.
        #[arg(long)]
        data: PathBuf,
        /// Window start; defaults to the first test window.
        #[arg(long)]
        start: Option<usize>,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long, default_value_t = 0)]
        patch: usize,
        #[arg(long, default_value = "7:1:2")]
        split: String,
    },
    /// Convert raw little-endian f32 frames (`T×C×H×W`) to a series file.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dims: String,
        #[arg(long)]
        steps_per_day: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
