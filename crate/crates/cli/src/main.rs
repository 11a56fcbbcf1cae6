//! `shrinktube`: synthesize shrinking tubes for the double-integrator case
//! study, audit them by Monte Carlo, and export their artifacts.

mod artifacts;
mod audit;
mod config;
mod exit;
mod export;
mod synthesize;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use exit::Exit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Parser)]
#[command(name = "shrinktube", version, about = "Shrinking robust invariant tubes under learned disturbances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the epoch loop and write a run directory.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        /// Parent directory for the run directory (overrides SHRINKTUBE_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Monte Carlo invariance audit of an epoch record.
    Audit {
        record: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Allowed violation rate; defaults to the record's alpha_uniform.
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Write the tube, the wrapper or the gap sequence of an epoch record.
    Export {
        record: PathBuf,
        #[arg(value_enum)]
        what: export::What,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Writes to standard output; a closed pipe is not an error.
pub fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Exit::Usage as u8 } else { Exit::Ok as u8 });
        }
    };
    let result = match cli.command {
        Command::Synthesize { config, out, seed, format } => {
            synthesize::run(synthesize::Options { config, out, seed, format })
        }
        Command::Audit { record, trials, steps, seed, budget, format } => {
            audit::run(audit::Options { record, trials, steps, seed, budget, format })
        }
        Command::Export { record, what, format, out } => export::run(export::Options { record, what, format, out }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
