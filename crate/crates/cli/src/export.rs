use std::fmt::Write as _;
use std::path::PathBuf;

use clap::ValueEnum;
use shrinktube::geom::SupportPolytope;

use crate::artifacts::{header, RecordDoc};
use crate::exit::{CliError, Exit};
use crate::{emit, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum What {
    /// The tube's state projection.
    Tube,
    /// The frozen disturbance wrapper.
    Wrapper,
    /// Hausdorff distance of each iterate to the limit, and the per-step gap.
    Gaps,
}

pub struct Options {
    pub record: PathBuf,
    pub what: What,
    pub format: Format,
    pub out: Option<PathBuf>,
}

pub fn run(opts: Options) -> Result<(), CliError> {
    let doc = RecordDoc::load(&opts.record)?;
    let rec = &doc.record;
    let text = match (opts.what, opts.format) {
        (What::Tube, Format::Json) => rec.result.proj_x.to_json(),
        (What::Tube, Format::Table) => support_table(&doc, &rec.result.proj_x, "support"),
        (What::Wrapper, Format::Json) => rec.wrapper.to_json(),
        (What::Wrapper, Format::Table) => {
            let env = rec.wrapper.envelope_polytope();
            support_table(&doc, &env, "envelope")
        }
        (What::Gaps, Format::Json) => {
            let v = serde_json::json!({
                "config_hash": doc.config_hash,
                "seed": doc.seed,
                "gaps": rec.result.gaps,
                "gaps_to_limit": rec.result.gaps_to_limit,
            });
            serde_json::to_string_pretty(&v).expect("gaps serialize")
        }
        (What::Gaps, Format::Table) => {
            let mut out = header(&doc.config_hash, doc.seed);
            // The distance to the limit is monotone along a decreasing
            // chain; the per-step gap need not be.
            let _ = writeln!(out, "iteration,gap_to_limit,step_gap");
            for (k, (g, s)) in rec.result.gaps_to_limit.iter().zip(&rec.result.gaps).enumerate() {
                let _ = writeln!(out, "{k},{g:e},{s:e}");
            }
            out
        }
    };
    match opts.out {
        Some(path) => std::fs::write(&path, text)
            .map_err(|e| CliError::new(Exit::Io, format!("cannot write {}: {e}", path.display()))),
        None => {
            emit(&text);
            if !text.ends_with('\n') {
                emit("\n");
            }
            Ok(())
        }
    }
}

fn support_table(doc: &RecordDoc, p: &SupportPolytope, column: &str) -> String {
    let mut out = header(&doc.config_hash, doc.seed);
    let d = p.directions();
    let mut cols: Vec<String> = (0..d.dims()).map(|i| format!("s{i}")).collect();
    cols.push(column.to_string());
    let _ = writeln!(out, "{}", cols.join(","));
    for j in 0..p.len() {
        let mut row: Vec<String> = d.dir(j).iter().map(|v| format!("{v:e}")).collect();
        row.push(format!("{:e}", p.value(j)));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}
