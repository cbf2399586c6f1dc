//! `stylex`: the batch experiment ladder.
//!
//! Subcommands: `generate` (phantom corpus), `train` (style encoder),
//! `sweep` (1-D parameter-sweep analysis), `cluster` (2-D style clusters),
//! `distance` (annotated distance report). Exit codes: 0 success, 1 usage,
//! 2 data error, 3 numeric abort.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use run::{CliError, OutDirLock};

#[derive(Parser)]
#[command(
    name = "stylex",
    version,
    about = "Style-distance experiments on synthetic X-ray phantoms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct CommonArgs {
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory; each subcommand writes its own subdirectory.
    #[arg(long)]
    out: PathBuf,
    /// Override the trainer seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum ClusterSet {
    LapX,
    SurrogateX,
}

#[derive(Subcommand)]
enum Command {
    /// Render the phantom corpus and write its manifest (idempotent).
    Generate(CommonArgs),
    /// Train the style encoder on the configured style set.
    Train(CommonArgs),
    /// One-parameter sweep: 1-D t-SNE, rank correlation, interpolation.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// LAP axis to sweep: w, l or h.
        #[arg(long)]
        axis: String,
    },
    /// Multi-style clustering: 2-D t-SNE, silhouette, k-NN probe.
    Cluster {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        set: ClusterSet,
    },
    /// Reference-image distance grid and CSV.
    Distance {
        #[command(flatten)]
        common: CommonArgs,
        /// Content seed of the reference image (default: first test id).
        #[arg(long)]
        reference_content: Option<u64>,
        /// Index of the reference style within the configured set.
        #[arg(long, default_value_t = 0)]
        reference_style: usize,
        /// Number of different-content rows under the reference row.
        #[arg(long, default_value_t = 1)]
        content_rows: usize,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(common) => {
            let _lock = OutDirLock::acquire(&common.out)?;
            commands::generate::run(&common)
        }
        Command::Train(common) => {
            let _lock = OutDirLock::acquire(&common.out)?;
            commands::train::run(&common)
        }
        Command::Sweep { common, axis } => {
            let axis = axis
                .parse::<stylex_core::LapAxis>()
                .map_err(CliError::Usage)?;
            let _lock = OutDirLock::acquire(&common.out)?;
            commands::sweep::run(&common, axis)
        }
        Command::Cluster { common, set } => {
            let _lock = OutDirLock::acquire(&common.out)?;
            commands::cluster::run(&common, set)
        }
        Command::Distance {
            common,
            reference_content,
            reference_style,
            content_rows,
        } => {
            let _lock = OutDirLock::acquire(&common.out)?;
            commands::distance::run(&common, reference_content, reference_style, content_rows)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not failures.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
