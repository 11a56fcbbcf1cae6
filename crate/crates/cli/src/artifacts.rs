use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shrinktube::gp::Dataset;
use shrinktube::plant::{BoxBaseline, EpochMetrics, EpochRecord, EpochRun, Scenario, SeedKind};

use crate::config::AuditConfig;
use crate::exit::{CliError, Exit};

/// One epoch's result together with what is needed to audit it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordDoc {
    pub config_hash: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub audit: AuditConfig,
    pub record: EpochRecord,
}

impl RecordDoc {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(Exit::Io, format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::new(Exit::Io, format!("{} is not a valid epoch record: {e}", path.display())))
    }
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub config_hash: &'a str,
    pub seed: u64,
    pub baseline: BaselineSummary<'a>,
    pub epochs: Vec<&'a EpochMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct BaselineSummary<'a> {
    pub w_box: &'a [f64],
    pub mean_support: f64,
    pub iterations: usize,
}

impl<'a> Summary<'a> {
    pub fn new(hash: &'a str, seed: u64, run: &'a EpochRun) -> Self {
        let b: &BoxBaseline = &run.baseline;
        Self {
            config_hash: hash,
            seed,
            baseline: BaselineSummary { w_box: &b.w_box, mean_support: b.mean_support, iterations: b.iterations },
            epochs: run.records.iter().map(|r| &r.metrics).collect(),
            error: run.error.as_ref().map(|e| e.to_string()),
        }
    }
}

pub fn header(hash: &str, seed: u64) -> String {
    format!("# config_hash: {hash}\n# seed: {seed}\n")
}

pub fn summary_table(s: &Summary<'_>) -> String {
    let mut out = header(s.config_hash, s.seed);
    let _ = writeln!(out, "# worst-case box tube: mean support {:.6e}, {} iterations", s.baseline.mean_support, s.baseline.iterations);
    let _ = writeln!(
        out,
        "{:>5} {:>6} {:>10} {:>11} {:>7} {:>13} {:>12} {:>14}",
        "epoch", "data", "iterations", "final_gap", "facets", "half_width", "ratio", "seed"
    );
    for (i, m) in s.epochs.iter().enumerate() {
        let seed = match m.seed {
            SeedKind::Warm => "warm".to_string(),
            SeedKind::Bootstrap(f) => format!("bootstrap({f})"),
            SeedKind::Graph => "graph".to_string(),
        };
        let _ = writeln!(
            out,
            "{:>5} {:>6} {:>10} {:>11.3e} {:>7} {:>13.6e} {:>12.6} {:>14}",
            i + 1,
            m.n_data,
            m.iterations,
            m.final_gap,
            m.facets,
            m.mean_half_width,
            m.conservatism_ratio,
            seed
        );
    }
    if let Some(e) = &s.error {
        let _ = writeln!(out, "# stopped: {e}");
    }
    out
}

/// One row per sample: `j, t, x…, u…, w…`.
pub fn dataset_csv(data: &Dataset, n: usize, hash: &str, seed: u64) -> String {
    let mut out = header(hash, seed);
    let m = data.dim_z() - n;
    let mut cols = vec!["j".to_string(), "t".to_string()];
    cols.extend((0..n).map(|i| format!("x{i}")));
    cols.extend((0..m).map(|i| format!("u{i}")));
    cols.extend((0..data.dim_w()).map(|i| format!("w{i}")));
    let _ = writeln!(out, "{}", cols.join(","));
    for j in 0..data.len() {
        let mut row = vec![j.to_string(), format!("{:e}", data.t(j))];
        row.extend(data.z(j).iter().chain(data.w(j)).map(|v| format!("{v:e}")));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// `<parent>/<UTC timestamp>-<hash prefix>`, suffixed when it already exists.
pub fn create_run_dir(parent: &Path, hash: &str) -> Result<PathBuf, CliError> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{stamp}-{}", &hash[..12]);
    std::fs::create_dir_all(parent)
        .map_err(|e| CliError::new(Exit::Io, format!("cannot create {}: {e}", parent.display())))?;
    for k in 0..1000 {
        let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
        let dir = parent.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::new(Exit::Io, format!("cannot create {}: {e}", dir.display()))),
        }
    }
    Err(CliError::new(Exit::Io, format!("too many run directories named {base}")))
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::new(Exit::Io, format!("cannot write {}: {e}", path.display())))
}
