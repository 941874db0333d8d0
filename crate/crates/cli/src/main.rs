//! `dtwin`: build dispenser twins from a filled template, serve them, run
//! paired experiments against the reference emulator and report fidelity.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "dtwin",
    version,
    about = "Digital twins of smart medicine dispensers"
)]
pub struct Cli {
    /// JSON file with `emulator`, `generator` and `alignment` sections.
    /// Flags given on the command line win over it.
    #[arg(long, global = true, env = "DTW_CONFIG")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the built-in dispenser schema as JSON.
    Schema {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the JSON template to fill in, plus a `.doc.json` describing
    /// every field.
    Template {
        #[arg(long, env = "DTW_TEMPLATE")]
        out: PathBuf,
    },
    /// Create `count` instances from a filled template, one file per serial.
    Fleet {
        #[arg(long, env = "DTW_INPUT")]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a fleet of twins over HTTP.
    Serve {
        #[arg(long, env = "DTW_INPUT")]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, env = "DTW_BIND", default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, env = "DTW_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "DTW_ACCELERATION", default_value_t = 60.0)]
        acceleration: f64,
    },
    /// Serve the reference device emulator over HTTP.
    Emulate {
        #[arg(long, env = "DTW_INPUT")]
        input: PathBuf,
        #[arg(long, default_value = "100")]
        serial: String,
        #[arg(long, env = "DTW_BIND", default_value = "127.0.0.1:8081")]
        bind: String,
        #[arg(long, env = "DTW_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        quirk_rate: Option<f64>,
        #[arg(long)]
        unavailable_rate: Option<f64>,
        #[arg(long, env = "DTW_ACCELERATION", default_value_t = 60.0)]
        acceleration: f64,
    },
    /// One paired run: generate requests, send each to a twin and to the
    /// emulator, record both traces.
    Run {
        /// Filled template; the built-in sample plan when omitted.
        #[arg(long, env = "DTW_INPUT")]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        hours: u32,
        /// Requests per minute; the standard rate for `hours` when omitted.
        #[arg(long)]
        rate: Option<u32>,
        #[arg(long, env = "DTW_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        invalid_rate: Option<f64>,
        /// Accept durations and rates outside the standard experiment grid.
        #[arg(long)]
        allow_nonstandard: bool,
        /// Serial number the requests address.
        #[arg(long, default_value = "100")]
        serial: String,
        /// Send twin requests to this server instead of an in-process twin.
        #[arg(long)]
        twin_url: Option<String>,
        /// Send device requests to this server instead of an in-process
        /// emulator.
        #[arg(long)]
        device_url: Option<String>,
        /// Pace requests against the wall clock at this speed-up.
        #[arg(long)]
        acceleration: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a run's corpus against fleets of twins.
    Batch {
        /// Directory written by `run`.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = dtwin_core::harness::BATCH_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, env = "DTW_INPUT")]
        input: Option<PathBuf>,
        #[arg(long, env = "DTW_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Similarity and statistical tests for one or more paired runs.
    Fidelity {
        /// Directories written by `run`.
        #[arg(long, num_args = 1.., required = true)]
        pairs: Vec<PathBuf>,
        /// Directory written by `batch`, compared against the device trace
        /// of the first run.
        #[arg(long)]
        batch: Option<PathBuf>,
        #[arg(long)]
        tolerance_ms: Option<f64>,
        /// Where to write report.json and report.csv; the first run
        /// directory when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DTW_LOG", "info")).init();
    let cli = Cli::parse();
    match commands::execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
