use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PlantError;

/// Planar point mass with quadratic drag and an actuator-efficiency loss.
///
/// State `x = (p_x, p_y, v_x, v_y)`, input `u = (a_x, a_y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubleIntegratorConfig {
    pub dt: f64,
    pub mass: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub noise_std: f64,
    pub noise: NoiseKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum NoiseKind {
    Gaussian,
    /// Per-axis gaussian conditioned on `|ϑ_i| ≤ bound`.
    TruncatedGaussian { bound: f64 },
}

impl Default for DoubleIntegratorConfig {
    fn default() -> Self {
        Self { dt: 0.1, mass: 1.0, beta1: 0.1, beta2: 0.05, noise_std: 0.01, noise: NoiseKind::Gaussian }
    }
}

impl DoubleIntegratorConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |field: &str, why: &str| Err(PlantError::Config(format!("{field}: {why}")));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", "must be positive");
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return bad("mass", "must be positive");
        }
        if !(self.beta1 >= 0.0 && self.beta1.is_finite()) {
            return bad("beta1", "must be non-negative");
        }
        if !(self.beta2 >= 0.0 && self.beta2.is_finite()) {
            return bad("beta2", "must be non-negative");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std", "must be non-negative");
        }
        if let NoiseKind::TruncatedGaussian { bound } = self.noise {
            if !(bound > 0.0 && bound.is_finite()) {
                return bad("noise.bound", "must be positive");
            }
        }
        Ok(())
    }

    /// Largest `|ϑ_i|` the noise can take; three standard deviations for
    /// untruncated noise.
    pub fn noise_bound(&self) -> f64 {
        match self.noise {
            NoiseKind::Gaussian => 3.0 * self.noise_std,
            NoiseKind::TruncatedGaussian { bound } => bound,
        }
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        if self.noise_std == 0.0 {
            return [0.0; 2];
        }
        let normal = Normal::new(0.0, self.noise_std).expect("validated std");
        let mut draw = || match self.noise {
            NoiseKind::Gaussian => normal.sample(rng),
            NoiseKind::TruncatedGaussian { bound } => loop {
                let t = normal.sample(rng);
                if t.abs() <= bound {
                    break t;
                }
            },
        };
        [draw(), draw()]
    }
}

/// Exact zero-order-hold discretization of the planar double integrator.
pub fn zoh(dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a = DMatrix::identity(4, 4);
    a[(0, 2)] = dt;
    a[(1, 3)] = dt;
    let mut b = DMatrix::zeros(4, 2);
    b[(0, 0)] = 0.5 * dt * dt;
    b[(1, 1)] = 0.5 * dt * dt;
    b[(2, 0)] = dt;
    b[(3, 1)] = dt;
    (a, b)
}

/// Infinite-horizon discrete LQR gain for `u = Kx`, by Riccati iteration.
pub fn dlqr(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>, PlantError> {
    let mut p = q.clone();
    for _ in 0..100_000 {
        let btp = b.transpose() * &p;
        let s = r + &btp * b;
        let gain = s
            .clone()
            .cholesky()
            .ok_or_else(|| PlantError::Config("LQR: R + BᵀPB is not positive definite".into()))?
            .solve(&(&btp * a));
        let next = q + a.transpose() * &p * a - a.transpose() * &p * b * &gain;
        let delta = (&next - &p).amax();
        p = next;
        if delta <= 1e-13 * p.amax().max(1.0) {
            return Ok(-gain);
        }
    }
    Err(PlantError::Config("LQR: Riccati iteration did not converge".into()))
}

/// Disturbance acceleration `−(β₁/m)‖v‖v − (β₂/m)u + ϑ`.
pub fn accel_disturbance(cfg: &DoubleIntegratorConfig, x: &[f64], u: &[f64], theta: [f64; 2]) -> [f64; 2] {
    let (vx, vy) = (x[2], x[3]);
    let speed = (vx * vx + vy * vy).sqrt();
    let drag = cfg.beta1 / cfg.mass * speed;
    let eff = cfg.beta2 / cfg.mass;
    [-drag * vx - eff * u[0] + theta[0], -drag * vy - eff * u[1] + theta[1]]
}

/// State-space disturbance `B·a` for the acceleration `a` above, with `ϑ`
/// drawn from `rng`.
pub fn true_disturbance<R: Rng + ?Sized>(
    cfg: &DoubleIntegratorConfig,
    b: &DMatrix<f64>,
    x: &[f64],
    u: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let a = accel_disturbance(cfg, x, u, cfg.sample_noise(rng));
    accel_to_state(b, a)
}

pub fn accel_to_state(b: &DMatrix<f64>, a: [f64; 2]) -> Vec<f64> {
    (0..b.nrows()).map(|i| b[(i, 0)] * a[0] + b[(i, 1)] * a[1]).collect()
}
