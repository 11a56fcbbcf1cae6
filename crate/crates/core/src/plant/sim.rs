use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{true_disturbance, DoubleIntegratorConfig, PlantError};
use crate::gp::Dataset;
use crate::lifted::{PlantModel, SelectorPolicy};

/// States leaving this box abort a simulation.
pub const SANITY_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub seed: u64,
    /// Sample time of step 0.
    #[serde(default)]
    pub t0: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }
}

pub trait InputPolicy {
    fn input(&mut self, k: usize, x: &[f64]) -> Result<Vec<f64>, PlantError>;
}

/// Replays a fixed input sequence.
pub struct OpenLoop(pub Vec<Vec<f64>>);

impl InputPolicy for OpenLoop {
    fn input(&mut self, k: usize, _x: &[f64]) -> Result<Vec<f64>, PlantError> {
        self.0.get(k).cloned().ok_or_else(|| PlantError::Config(format!("open-loop sequence has no input {k}")))
    }
}

/// `u = Kx + v` with `v` supplied per step.
pub struct AuxFeedback<'a, F: FnMut(usize, &[f64]) -> Result<Vec<f64>, PlantError>> {
    pub plant: &'a PlantModel,
    pub aux: F,
}

impl<F: FnMut(usize, &[f64]) -> Result<Vec<f64>, PlantError>> InputPolicy for AuxFeedback<'_, F> {
    fn input(&mut self, k: usize, x: &[f64]) -> Result<Vec<f64>, PlantError> {
        let v = (self.aux)(k, x)?;
        Ok(feedback(self.plant, x, &v))
    }
}

/// `u = Kx + κ(x)`.
pub struct SelectorFeedback<'a> {
    pub plant: &'a PlantModel,
    pub selector: &'a SelectorPolicy,
}

impl InputPolicy for SelectorFeedback<'_> {
    fn input(&mut self, _k: usize, x: &[f64]) -> Result<Vec<f64>, PlantError> {
        let v = self.selector.select(x)?;
        Ok(feedback(self.plant, x, &v))
    }
}

pub fn feedback(plant: &PlantModel, x: &[f64], v: &[f64]) -> Vec<f64> {
    let k = plant.k();
    (0..k.nrows()).map(|i| (0..k.ncols()).map(|j| k[(i, j)] * x[j]).sum::<f64>() + v[i]).collect()
}

/// `Ax + Bu`.
pub fn nominal_step(plant: &PlantModel, x: &[f64], u: &[f64]) -> Vec<f64> {
    let (a, b) = (plant.a(), plant.b());
    (0..a.nrows())
        .map(|i| {
            (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum::<f64>() + (0..b.ncols()).map(|j| b[(i, j)] * u[j]).sum::<f64>()
        })
        .collect()
}

/// Rolls `x⁺ = Ax + Bu + w(x, u)` for `steps` steps with the true
/// disturbance; the noise stream is seeded by `seed`.
pub fn simulate(
    cfg: &DoubleIntegratorConfig,
    plant: &PlantModel,
    policy: &mut dyn InputPolicy,
    x0: &[f64],
    steps: usize,
    seed: u64,
) -> Result<Trajectory, PlantError> {
    if steps == 0 {
        return Err(PlantError::Config("steps must be at least 1".into()));
    }
    if x0.len() != plant.n() {
        return Err(PlantError::Config("initial state has the wrong dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = vec![x0.to_vec()];
    let mut inputs = Vec::with_capacity(steps);
    for k in 0..steps {
        let x = &states[k];
        let u = policy.input(k, x)?;
        let w = true_disturbance(cfg, plant.b(), x, &u, &mut rng);
        let next: Vec<f64> = nominal_step(plant, x, &u).iter().zip(&w).map(|(a, b)| a + b).collect();
        if next.iter().any(|v| !v.is_finite() || v.abs() > SANITY_BOUND) {
            return Err(PlantError::Diverged { step: k + 1 });
        }
        inputs.push(u);
        states.push(next);
    }
    Ok(Trajectory { states, inputs, seed, t0: 0.0 })
}

/// Residuals `w = x(k+1) − Ax(k) − Bu(k)` with inputs `z = (x, u)` and
/// time stamps `t0 + k·dt`.
pub fn extract_residuals(plant: &PlantModel, traj: &Trajectory, dt: f64) -> Result<Dataset, PlantError> {
    if traj.states.len() != traj.inputs.len() + 1 || traj.inputs.is_empty() {
        return Err(PlantError::Config("trajectory needs at least one step and states = inputs + 1".into()));
    }
    let (n, m) = (plant.n(), plant.m());
    let mut data = Dataset::new(n + m, n);
    for (k, u) in traj.inputs.iter().enumerate() {
        let x = &traj.states[k];
        let pred = nominal_step(plant, x, u);
        let w: Vec<f64> = traj.states[k + 1].iter().zip(&pred).map(|(a, b)| a - b).collect();
        let z: Vec<f64> = x.iter().chain(u).copied().collect();
        data.push(&z, traj.t0 + k as f64 * dt, &w)?;
    }
    Ok(data)
}

/// One row per step: `k, x…, u…, w…`, preceded by `#` metadata lines.
pub fn trajectory_csv(plant: &PlantModel, traj: &Trajectory, header: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in header {
        let _ = writeln!(out, "# {k}: {v}");
    }
    let _ = writeln!(out, "# seed: {}", traj.seed);
    let (n, m) = (plant.n(), plant.m());
    let mut cols = vec!["k".to_string()];
    cols.extend((0..n).map(|i| format!("x{i}")));
    cols.extend((0..m).map(|i| format!("u{i}")));
    cols.extend((0..n).map(|i| format!("w{i}")));
    let _ = writeln!(out, "{}", cols.join(","));
    for (k, u) in traj.inputs.iter().enumerate() {
        let x = &traj.states[k];
        let pred = nominal_step(plant, x, u);
        let mut row = vec![k.to_string()];
        row.extend(x.iter().chain(u).map(|v| format!("{v:e}")));
        row.extend(traj.states[k + 1].iter().zip(&pred).map(|(a, b)| format!("{:e}", a - b)));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}
