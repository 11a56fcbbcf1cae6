use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use shrinktube::plant::{monte_carlo_invariance, McReport};

use crate::artifacts::{header, RecordDoc};
use crate::exit::{CliError, Exit};
use crate::{emit, Format};

pub struct Options {
    pub record: PathBuf,
    pub trials: Option<usize>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub budget: Option<f64>,
    pub format: Format,
}

#[derive(Serialize)]
struct Verdict<'a> {
    config_hash: &'a str,
    seed: u64,
    budget: f64,
    /// Three binomial standard errors at the budget.
    margin: f64,
    passed: bool,
    report: &'a McReport,
}

/// Monte Carlo audit of one epoch record; fails when the empirical
/// violation rate exceeds the budget plus its statistical margin.
pub fn run(opts: Options) -> Result<(), CliError> {
    let doc = RecordDoc::load(&opts.record)?;
    let trials = opts.trials.unwrap_or(doc.audit.trials);
    let steps = opts.steps.unwrap_or(doc.audit.steps);
    let seed = opts.seed.unwrap_or(doc.seed);
    let budget = opts.budget.or(doc.audit.budget).unwrap_or(doc.record.metrics.alpha_uniform);
    if !(0.0..1.0).contains(&budget) {
        return Err(CliError::new(Exit::Usage, format!("budget must lie in [0, 1), got {budget}")));
    }
    let built = doc.scenario.build()?;
    let report = monte_carlo_invariance(&doc.record, &doc.scenario.physics, &built.plant, trials, steps, seed)?;
    let margin = if report.vacuous { 0.0 } else { 3.0 * (budget * (1.0 - budget) / report.steps_taken as f64).sqrt() };
    let passed = report.within_budget(budget);
    if report.vacuous {
        eprintln!("warning: no steps were simulated; the containment rate is vacuous");
    }
    if report.selector_failures > 0 {
        eprintln!("warning: {} trials ended on a selector failure", report.selector_failures);
    }
    let verdict = Verdict { config_hash: &doc.config_hash, seed, budget, margin, passed, report: &report };
    match opts.format {
        Format::Table => emit(&table(&verdict)),
        Format::Json => emit(&format!("{}\n", serde_json::to_string_pretty(&verdict).expect("verdict serializes"))),
    }
    if passed {
        Ok(())
    } else {
        Err(CliError::new(
            Exit::AuditFailed,
            format!("violation rate {:.3e} exceeds budget {budget:.3e} + margin {margin:.3e}", report.violation_rate),
        ))
    }
}

fn table(v: &Verdict<'_>) -> String {
    let r = v.report;
    let mut out = header(v.config_hash, v.seed);
    let _ = writeln!(out, "trials            {}", r.trials);
    let _ = writeln!(out, "steps per trial   {}", r.steps_per_trial);
    let _ = writeln!(out, "steps taken       {}", r.steps_taken);
    let _ = writeln!(out, "containment rate  {:.6}", r.containment_rate);
    let _ = writeln!(out, "violation rate    {:.6e}", r.violation_rate);
    let _ = writeln!(out, "budget            {:.6e}", v.budget);
    let _ = writeln!(out, "margin            {:.6e}", v.margin);
    let _ = writeln!(out, "selector failures {}", r.selector_failures);
    if let Some(first) = r.violations.first() {
        let _ = writeln!(out, "first violation   trial {} step {} excess {:.3e}", first.trial, first.step, first.excess);
    }
    let _ = writeln!(out, "result            {}", if v.passed { "pass" } else { "fail" });
    out
}
