//! Exact Gaussian-process regression, one independent model per disturbance
//! component.
//!
//! The kernel is `σ_f²·k_SE(z,z')·k_PER(t,t') + σ_n²·δ`, where `z = (x, u)`
//! and `t` is the sample time. The periodic factor is optional and off by
//! default.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default floor on predictive variances.
pub const SIGMA_MIN2: f64 = 1e-10;

const JITTER_LADDER: [f64; 5] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6];

#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("kernel matrix of component {component} is not positive definite even with jitter {jitter:e}·σ_f²")]
    IllConditioned { component: usize, jitter: f64 },
    #[error("malformed model document: {0}")]
    Format(#[from] serde_json::Error),
}

fn invalid(msg: impl Into<String>) -> GpError {
    GpError::InvalidArgument(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub sigma_f2: f64,
    pub ell: f64,
    pub period: f64,
    pub ell_p: f64,
    pub sigma_n2: f64,
    /// When false the periodic factor is the constant 1.
    #[serde(default)]
    pub periodic: bool,
}

impl KernelParams {
    /// Time-free kernel; `period` and `ell_p` are set to 1 and unused.
    pub fn squared_exponential(sigma_f2: f64, ell: f64, sigma_n2: f64) -> Self {
        Self { sigma_f2, ell, period: 1.0, ell_p: 1.0, sigma_n2, periodic: false }
    }

    pub fn validate(&self) -> Result<(), GpError> {
        for (name, v) in [
            ("sigma_f2", self.sigma_f2),
            ("ell", self.ell),
            ("period", self.period),
            ("ell_p", self.ell_p),
            ("sigma_n2", self.sigma_n2),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("kernel parameter {name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// `σ_f²·exp(−‖z−z2‖²/(2ℓ²))·exp(−2 sin²(π(t−t2)/p)/ℓ_p²) + σ_n²·[same_point]`.
pub fn kernel_eval(p: &KernelParams, z: &[f64], t: f64, z2: &[f64], t2: f64, same_point: bool) -> f64 {
    debug_assert_eq!(z.len(), z2.len());
    let d2: f64 = z.iter().zip(z2).map(|(a, b)| (a - b) * (a - b)).sum();
    let mut k = p.sigma_f2 * (-d2 / (2.0 * p.ell * p.ell)).exp();
    if p.periodic {
        let s = (std::f64::consts::PI * (t - t2) / p.period).sin();
        k *= (-2.0 * s * s / (p.ell_p * p.ell_p)).exp();
    }
    if same_point {
        k += p.sigma_n2;
    }
    k
}

/// Training triplets `(z, t, w)` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    dim_z: usize,
    dim_w: usize,
    z: Vec<f64>,
    t: Vec<f64>,
    w: Vec<f64>,
}

impl Dataset {
    pub fn new(dim_z: usize, dim_w: usize) -> Self {
        Self { dim_z, dim_w, z: Vec::new(), t: Vec::new(), w: Vec::new() }
    }

    pub fn push(&mut self, z: &[f64], t: f64, w: &[f64]) -> Result<(), GpError> {
        if z.len() != self.dim_z || w.len() != self.dim_w {
            return Err(invalid(format!(
                "sample of shape ({}, {}) in a ({}, {}) dataset",
                z.len(),
                w.len(),
                self.dim_z,
                self.dim_w
            )));
        }
        if !(z.iter().chain(w).all(|v| v.is_finite()) && t.is_finite()) {
            return Err(invalid("non-finite sample"));
        }
        self.z.extend_from_slice(z);
        self.t.push(t);
        self.w.extend_from_slice(w);
        Ok(())
    }

    pub fn extend(&mut self, other: &Dataset) -> Result<(), GpError> {
        if other.dim_z != self.dim_z || other.dim_w != self.dim_w {
            return Err(invalid("datasets have different shapes"));
        }
        self.z.extend_from_slice(&other.z);
        self.t.extend_from_slice(&other.t);
        self.w.extend_from_slice(&other.w);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim_z(&self) -> usize {
        self.dim_z
    }

    pub fn dim_w(&self) -> usize {
        self.dim_w
    }

    pub fn z(&self, j: usize) -> &[f64] {
        &self.z[j * self.dim_z..(j + 1) * self.dim_z]
    }

    pub fn t(&self, j: usize) -> f64 {
        self.t[j]
    }

    pub fn w(&self, j: usize) -> &[f64] {
        &self.w[j * self.dim_w..(j + 1) * self.dim_w]
    }

    /// Observations of component `i` across all samples.
    pub fn w_component(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|j| self.w[j * self.dim_w + i]).collect()
    }

    /// Same inputs, observations mapped sample by sample.
    pub fn map_w(&self, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Result<Self, GpError> {
        let mut out = Self::new(self.dim_z, self.dim_w);
        for j in 0..self.len() {
            out.push(self.z(j), self.t(j), &f(j, self.w(j)))?;
        }
        Ok(out)
    }
}

/// One fitted scalar GP.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpComponent {
    params: KernelParams,
    dim_z: usize,
    z: Vec<f64>,
    t: Vec<f64>,
    /// Lower Cholesky factor of `K + σ_n² I` (plus jitter).
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpComponent {
    /// Fits component `component` of `data` with `params`.
    pub fn fit(data: &Dataset, params: &KernelParams, component: usize) -> Result<Self, GpError> {
        params.validate()?;
        if component >= data.dim_w() {
            return Err(invalid(format!("component {component} out of range")));
        }
        let n = data.len();
        let dim_z = data.dim_z();
        let gram = DMatrix::from_fn(n, n, |i, j| {
            kernel_eval(params, data.z(i), data.t(i), data.z(j), data.t(j), i == j)
        });
        let y = DVector::from_vec(data.w_component(component));

        let mut last = 0.0;
        for rel in JITTER_LADDER {
            last = rel;
            let mut m = gram.clone();
            for i in 0..n {
                m[(i, i)] += rel * params.sigma_f2;
            }
            if let Some(chol) = Cholesky::<f64, Dyn>::new(m) {
                let alpha = chol.solve(&y);
                return Ok(Self {
                    params: *params,
                    dim_z,
                    z: data.z.clone(),
                    t: data.t.clone(),
                    chol: chol.l(),
                    alpha,
                    jitter: rel * params.sigma_f2,
                });
            }
        }
        Err(GpError::IllConditioned { component, jitter: last })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Absolute diagonal jitter the factorization needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    fn cross(&self, z: &[f64], t: f64) -> DVector<f64> {
        let n = self.len();
        DVector::from_fn(n, |j, _| {
            kernel_eval(&self.params, z, t, &self.z[j * self.dim_z..(j + 1) * self.dim_z], self.t[j], false)
        })
    }

    /// Posterior mean and unclamped predictive variance at `(z, t)`.
    pub fn predict_raw(&self, z: &[f64], t: f64) -> (f64, f64) {
        let prior = self.params.sigma_f2 + self.params.sigma_n2;
        if self.is_empty() {
            return (0.0, prior);
        }
        let k = self.cross(z, t);
        let mean = k.dot(&self.alpha);
        let v = self
            .chol
            .solve_lower_triangular(&k)
            .expect("Cholesky factor has a positive diagonal");
        (mean, prior - v.dot(&v))
    }

    /// An unfitted component: zero mean and prior variance everywhere.
    pub fn prior(params: &KernelParams, dim_z: usize) -> Result<Self, GpError> {
        params.validate()?;
        Ok(Self {
            params: *params,
            dim_z,
            z: Vec::new(),
            t: Vec::new(),
            chol: DMatrix::zeros(0, 0),
            alpha: DVector::zeros(0),
            jitter: 0.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorPoint {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Independent per-component GPs sharing the same inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpModel {
    dim_z: usize,
    sigma_min2: f64,
    components: Vec<GpComponent>,
}

impl GpModel {
    /// Fits every component of `data`; `params[i]` belongs to component `i`.
    pub fn fit(data: &Dataset, params: &[KernelParams], sigma_min2: f64) -> Result<Self, GpError> {
        if params.len() != data.dim_w() {
            return Err(invalid(format!(
                "{} kernel parameter sets for {} components",
                params.len(),
                data.dim_w()
            )));
        }
        if !(sigma_min2.is_finite() && sigma_min2 > 0.0) {
            return Err(invalid("sigma_min2 must be positive"));
        }
        let components = if data.is_empty() {
            params.iter().map(|p| GpComponent::prior(p, data.dim_z())).collect::<Result<_, _>>()?
        } else {
            params
                .par_iter()
                .enumerate()
                .map(|(i, p)| GpComponent::fit(data, p, i))
                .collect::<Result<Vec<_>, _>>()?
        };
        Ok(Self { dim_z: data.dim_z(), sigma_min2, components })
    }

    pub fn dim_z(&self) -> usize {
        self.dim_z
    }

    pub fn dim_w(&self) -> usize {
        self.components.len()
    }

    pub fn sigma_min2(&self) -> f64 {
        self.sigma_min2
    }

    pub fn components(&self) -> &[GpComponent] {
        &self.components
    }

    pub fn posterior(&self, z: &[f64], t: f64) -> PosteriorPoint {
        assert_eq!(z.len(), self.dim_z, "query of length {} for a {}-dim model", z.len(), self.dim_z);
        let (mean, var) = self
            .components
            .iter()
            .map(|c| {
                let (m, v) = c.predict_raw(z, t);
                (m, v.max(self.sigma_min2))
            })
            .unzip();
        PosteriorPoint { mean, var }
    }

    pub fn posterior_batch(&self, queries: &[(Vec<f64>, f64)]) -> Vec<PosteriorPoint> {
        queries.par_iter().map(|(z, t)| self.posterior(z, *t)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GpError> {
        let m: Self = serde_json::from_str(text)?;
        for c in &m.components {
            c.params.validate()?;
            let n = c.t.len();
            if c.dim_z != m.dim_z
                || c.z.len() != n * m.dim_z
                || c.chol.shape() != (n, n)
                || c.alpha.len() != n
            {
                return Err(invalid("inconsistent component shapes"));
            }
        }
        Ok(m)
    }
}
