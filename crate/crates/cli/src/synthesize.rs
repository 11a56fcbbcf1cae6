use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use shrinktube::plant::run_epochs;

use crate::artifacts::{create_run_dir, dataset_csv, summary_table, write, RecordDoc, Summary};
use crate::config::RunConfig;
use crate::exit::{CliError, Exit};
use crate::{emit, Format};

pub const OUT_ENV: &str = "SHRINKTUBE_OUT";

#[derive(Serialize)]
struct Timings {
    started_utc: String,
    run_seconds: f64,
    total_seconds: f64,
}

pub struct Options {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Format,
}

/// Runs the epoch loop and writes the run directory. Completed epochs are
/// written even when a later one fails.
pub fn run(opts: Options) -> Result<(), CliError> {
    let start = Instant::now();
    let started_utc = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let mut cfg = RunConfig::load(&opts.config)?;
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    let parent = opts
        .out
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    let hash = cfg.hash();
    let dir = create_run_dir(&parent, &hash)?;
    eprintln!("run directory: {}", dir.display());
    write(&dir, "config.toml", &cfg.to_toml())?;

    let t = Instant::now();
    let run = run_epochs(&cfg.scenario, cfg.seed)?;
    let run_seconds = t.elapsed().as_secs_f64();

    for rec in &run.records {
        let doc = RecordDoc {
            config_hash: hash.clone(),
            seed: cfg.seed,
            scenario: cfg.scenario.clone(),
            audit: cfg.audit.clone(),
            record: rec.clone(),
        };
        let json = serde_json::to_string_pretty(&doc).map_err(|e| CliError::new(Exit::Internal, e.to_string()))?;
        write(&dir, &format!("epoch-{}.json", rec.q + 1), &json)?;
    }
    if let Some(last) = run.records.last() {
        write(&dir, "dataset.csv", &dataset_csv(&last.dataset, 4, &hash, cfg.seed))?;
    }
    let summary = Summary::new(&hash, cfg.seed, &run);
    let table = summary_table(&summary);
    let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::new(Exit::Internal, e.to_string()))?;
    write(&dir, "summary.txt", &table)?;
    write(&dir, "summary.json", &json)?;
    let timings = Timings { started_utc, run_seconds, total_seconds: start.elapsed().as_secs_f64() };
    write(&dir, "timings.json", &serde_json::to_string_pretty(&timings).expect("timings serialize"))?;

    match opts.format {
        Format::Table => emit(&table),
        Format::Json => emit(&format!("{json}\n")),
    }
    match run.error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}
