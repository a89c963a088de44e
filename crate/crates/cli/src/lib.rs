//! Command-line driver for the discovery workbench.
//!
//! Every subcommand opens the knowledge base given by `--kb`, does one
//! thing and prints its result (JSON, or CSV for rankings and assessment
//! exports) to stdout or to `--out`. Failures print the service error body
//! as one JSON line on stderr and exit nonzero; usage errors exit with 2.

mod commands;
mod error;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use workbench_core::id::Id;
use workbench_core::kara::RollupMode;

pub use error::CliError;

/// Environment variable naming a pipeline stage after which the process
/// exits at once, as if killed.
pub const ABORT_AFTER_ENV: &str = "WORKBENCH_ABORT_AFTER";
/// Exit status of a run stopped through [`ABORT_AFTER_ENV`].
pub const ABORT_EXIT_CODE: i32 = 86;

#[derive(Debug, Parser)]
#[command(name = "workbench", version, about = "Discovery workbench driver")]
pub struct Cli {
    /// Knowledge base directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    pub kb: Option<PathBuf>,

    /// Seeds identifier generation and every sampler.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Write the result here instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Import a CSV file through a column mapping (TOML, or JSON by extension).
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        mapping: PathBuf,
        /// Dataset name; defaults to the CSV file stem.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        study: Option<Id>,
    },
    /// Sample new candidates from the keys of a seed dataset.
    Generate {
        #[arg(long)]
        dataset: Id,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        study: Option<Id>,
    },
    /// Record a batch of labels from a `candidate_id,expert_id,choice` CSV.
    AdjudicateReplay {
        #[arg(long)]
        labels: PathBuf,
        /// Session to record into.
        #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
        session: Option<Id>,
        /// Open a new session over this dataset instead.
        #[arg(long)]
        dataset: Option<Id>,
        #[arg(long, requires = "dataset")]
        question: Option<String>,
        /// Close the session once the batch is stored.
        #[arg(long)]
        close: bool,
    },
    /// Train a triage model on the labels of one or more sessions.
    TriageTrain {
        #[arg(long = "session", required = true)]
        sessions: Vec<Id>,
        /// Comma-separated attributes; defaults to the constitutional descriptors.
        #[arg(long, value_delimiter = ',')]
        attributes: Vec<String>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        l2: Option<f64>,
        #[arg(long)]
        study: Option<Id>,
    },
    /// Rank a dataset with a model, as CSV.
    TriageRank {
        #[arg(long)]
        model: Id,
        #[arg(long)]
        dataset: Id,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Keep the top-ranked fraction of a dataset as a new dataset.
    TriageReduce {
        #[arg(long)]
        model: Id,
        #[arg(long)]
        dataset: Id,
        #[arg(long)]
        keep: f64,
        #[arg(long, default_value = "triaged")]
        name: String,
        #[arg(long)]
        study: Option<Id>,
    },
    /// Calibrate the LOK scale of one expert, or the global scale.
    LokCalibrate {
        #[arg(long)]
        risk_factor: Id,
        /// Expert whose comparisons are used; omitted means the global scale.
        #[arg(long)]
        expert: Option<String>,
        #[arg(long, default_value_t = 0.02)]
        epsilon: f64,
        /// Also write the LP in text form to this file.
        #[arg(long, value_name = "FILE")]
        dump_lp: Option<PathBuf>,
    },
    /// Resolve the comparisons of all experts into one consistent set.
    Consensus {
        #[arg(long)]
        risk_factor: Id,
    },
    /// Report one candidate's POS, or export every final POS as CSV.
    PosReport {
        #[arg(long)]
        candidate: Option<Id>,
        #[arg(long, value_enum, default_value = "product")]
        mode: Mode,
    },
    /// Run the configured discovery pipeline and write its report.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve the knowledge base over HTTP until interrupted.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum Mode {
    Product,
    Min,
}

impl From<Mode> for RollupMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Product => RollupMode::Product,
            Mode::Min => RollupMode::Min,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            let body = e.api_error();
            eprintln!(
                "{}",
                serde_json::to_string(&body).unwrap_or_else(|_| body.message.clone())
            );
            code
        }
    }
}
