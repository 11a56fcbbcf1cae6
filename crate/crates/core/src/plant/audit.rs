use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, feedback, nominal_step, true_disturbance, DoubleIntegratorConfig, EpochRecord, PlantError};
use crate::lifted::{LiftedError, PlantModel, SelectorPolicy};

/// Slack on tube membership; the fixed point is invariant up to LP
/// round-off.
pub const CONTAINMENT_TOL: f64 = 1e-7;

const SAMPLE_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Violation {
    pub trial: usize,
    pub step: usize,
    pub state: Vec<f64>,
    /// Smallest relaxation of the tube that would contain `state`.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McReport {
    pub trials: usize,
    pub steps_per_trial: usize,
    /// Steps actually taken; a trial stops at its first violation.
    pub steps_taken: usize,
    pub contained: usize,
    pub containment_rate: f64,
    pub violation_rate: f64,
    pub violations: Vec<Violation>,
    /// Trials cut short by a selector failure; not counted as violations.
    pub selector_failures: usize,
    /// No steps were taken, so the rate is vacuous.
    pub vacuous: bool,
}

impl McReport {
    /// `rate ≤ budget + 3·sqrt(budget(1 − budget)/N)`.
    pub fn within_budget(&self, budget: f64) -> bool {
        if self.vacuous {
            return true;
        }
        let se = (budget * (1.0 - budget) / self.steps_taken as f64).sqrt();
        self.violation_rate <= budget + 3.0 * se
    }
}

enum TrialEnd {
    Done,
    Violated(Violation),
    SelectorFailed,
}

/// Closed-loop rollouts of `u = Kx + κ(x)` under the true disturbance from
/// states drawn uniformly on the tube, counting steps that leave it.
pub fn monte_carlo_invariance(
    record: &EpochRecord,
    cfg: &DoubleIntegratorConfig,
    plant: &PlantModel,
    trials: usize,
    steps: usize,
    seed: u64,
) -> Result<McReport, PlantError> {
    let selector = SelectorPolicy::new(&record.result, plant.n(), plant.m())?;
    let outcomes: Vec<Result<(usize, usize, TrialEnd), PlantError>> = (0..trials)
        .into_par_iter()
        .map(|trial| run_trial(&selector, cfg, plant, trial, steps, derive_seed(seed, 0x7E57, trial as u64)))
        .collect();
    let mut report = McReport {
        trials,
        steps_per_trial: steps,
        steps_taken: 0,
        contained: 0,
        containment_rate: 1.0,
        violation_rate: 0.0,
        violations: Vec::new(),
        selector_failures: 0,
        vacuous: false,
    };
    for o in outcomes {
        let (taken, contained, end) = o?;
        report.steps_taken += taken;
        report.contained += contained;
        match end {
            TrialEnd::Done => {}
            TrialEnd::Violated(v) => report.violations.push(v),
            TrialEnd::SelectorFailed => report.selector_failures += 1,
        }
    }
    if report.steps_taken == 0 {
        report.vacuous = true;
    } else {
        report.containment_rate = report.contained as f64 / report.steps_taken as f64;
        report.violation_rate = 1.0 - report.containment_rate;
    }
    Ok(report)
}

fn run_trial(
    selector: &SelectorPolicy,
    cfg: &DoubleIntegratorConfig,
    plant: &PlantModel,
    trial: usize,
    steps: usize,
    seed: u64,
) -> Result<(usize, usize, TrialEnd), PlantError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = sample_in_tube(selector, &mut rng)?;
    let mut contained = 0;
    for step in 0..steps {
        let v = match selector.select(&x) {
            Ok(v) => v,
            Err(LiftedError::SelectorInfeasible { .. } | LiftedError::Qp(_)) => {
                return Ok((step, contained, TrialEnd::SelectorFailed));
            }
            Err(e) => return Err(e.into()),
        };
        let u = feedback(plant, &x, &v);
        let w = true_disturbance(cfg, plant.b(), &x, &u, &mut rng);
        x = nominal_step(plant, &x, &u).iter().zip(&w).map(|(a, b)| a + b).collect();
        let excess = selector.tube_violation(&x)?;
        if excess > CONTAINMENT_TOL {
            let v = Violation { trial, step, state: x, excess };
            return Ok((step + 1, contained, TrialEnd::Violated(v)));
        }
        contained += 1;
    }
    Ok((steps, contained, TrialEnd::Done))
}

/// Rejection sampling on the bounding box of the tube projection.
pub fn sample_in_tube<R: Rng + ?Sized>(selector: &SelectorPolicy, rng: &mut R) -> Result<Vec<f64>, PlantError> {
    let (lo, hi) = selector.proj_x().bounding_box();
    for _ in 0..SAMPLE_ATTEMPTS {
        let x: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| if h > l { rng.gen_range(*l..=*h) } else { *l }).collect();
        if selector.in_tube(&x, 0.0)? {
            return Ok(x);
        }
    }
    Err(PlantError::Config("could not sample an initial state inside the tube".into()))
}
