use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{chi2_quantile, WrapperError};
use crate::geom::{DirectionSet, SupportPolytope};
use crate::gp::GpModel;

/// `{w : (w−μ)ᵀ Σ⁻¹ (w−μ) ≤ χ²}` with diagonal `Σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibleEllipsoid {
    pub mu: Vec<f64>,
    pub sigma_diag: Vec<f64>,
    pub chi2: f64,
}

impl CredibleEllipsoid {
    pub fn new(mu: Vec<f64>, sigma_diag: Vec<f64>, chi2: f64) -> Result<Self, WrapperError> {
        if mu.len() != sigma_diag.len() || mu.is_empty() {
            return Err(WrapperError::invalid("mean and covariance lengths differ"));
        }
        if !(chi2 > 0.0 && chi2.is_finite()) || sigma_diag.iter().any(|s| !(*s > 0.0)) {
            return Err(WrapperError::invalid("ellipsoid needs positive chi2 and variances"));
        }
        Ok(Self { mu, sigma_diag, chi2 })
    }

    pub fn dims(&self) -> usize {
        self.mu.len()
    }

    /// `sᵀμ + sqrt(χ²)·sqrt(Σᵢ sᵢ² σᵢ²)`.
    pub fn support(&self, s: &[f64]) -> f64 {
        ellipsoid_support(&self.mu, &self.sigma_diag, self.chi2.sqrt(), s)
    }

    /// Circumscribing polytope on `dirs`; contains the ellipsoid by construction.
    pub fn polytopize(&self, dirs: &Arc<DirectionSet>) -> Result<SupportPolytope, WrapperError> {
        if dirs.dims() != self.dims() {
            return Err(WrapperError::invalid("direction set dimension differs from the ellipsoid"));
        }
        let h = dirs.iter().map(|s| self.support(s)).collect();
        Ok(SupportPolytope::new(dirs.clone(), h)?)
    }
}

/// Support of the ellipsoid with centre `mu`, diagonal `var` and radius `c`.
pub fn ellipsoid_support(mu: &[f64], var: &[f64], c: f64, s: &[f64]) -> f64 {
    let lin: f64 = s.iter().zip(mu).map(|(a, b)| a * b).sum();
    let quad: f64 = s.iter().zip(var).map(|(a, v)| a * a * v).sum();
    lin + c * quad.sqrt()
}

/// The `1 − alpha` credible ellipsoid of the posterior at `(z, t)`.
pub fn ellipsoid_at(model: &GpModel, z: &[f64], t: f64, alpha: f64) -> Result<CredibleEllipsoid, WrapperError> {
    let chi2 = chi2_quantile(model.dim_w(), 1.0 - alpha)?;
    let post = model.posterior(z, t);
    CredibleEllipsoid::new(post.mean, post.var, chi2)
}
