use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{RegionBox, WrapperError};
use crate::geom::DirectionSet;
use crate::gp::GpModel;

/// Lipschitz constants of the posterior in `(x, v)` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzBounds {
    pub l_mu: f64,
    /// One entry per stored disturbance direction.
    pub l_sigma: Vec<f64>,
}

impl LipschitzBounds {
    pub fn zero(n_dirs: usize) -> Self {
        Self { l_mu: 0.0, l_sigma: vec![0.0; n_dirs] }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { l_mu: k * self.l_mu, l_sigma: self.l_sigma.iter().map(|l| k * l).collect() }
    }
}

/// Maps `(x, v)` to the model input `z = (x, Kx + v)`.
pub fn xv_to_z(gain: &DMatrix<f64>, xv: &[f64]) -> Vec<f64> {
    let n = gain.ncols();
    let (x, v) = xv.split_at(n);
    let mut z = x.to_vec();
    for r in 0..gain.nrows() {
        let kx: f64 = (0..n).map(|c| gain[(r, c)] * x[c]).sum();
        z.push(kx + v[r]);
    }
    z
}

/// `σ_s = sqrt(Σᵢ sᵢ² varᵢ)`.
pub fn sigma_along(var: &[f64], s: &[f64]) -> f64 {
    s.iter().zip(var).map(|(a, v)| a * a * v).sum::<f64>().sqrt()
}

/// Largest finite-difference gradient norm over a `grid_density`-per-axis
/// grid on `region`, times `safety`.
///
/// The mean bound uses the Frobenius norm of the difference Jacobian, which
/// dominates its operator norm. Forward differences are used except on the
/// last grid layer of each axis, where the backward difference is taken.
/// Zero-width axes are skipped.
pub fn estimate_lipschitz(
    model: &GpModel,
    region: &RegionBox,
    gain: &DMatrix<f64>,
    dirs: &DirectionSet,
    grid_density: usize,
    safety: f64,
) -> Result<LipschitzBounds, WrapperError> {
    let d = region.dims();
    if gain.ncols() + gain.nrows() != d || model.dim_z() != d {
        return Err(WrapperError::invalid("region, gain and model dimensions disagree"));
    }
    if dirs.dims() != model.dim_w() {
        return Err(WrapperError::invalid("direction set is not in disturbance space"));
    }
    if grid_density < 3 {
        return Err(WrapperError::invalid("grid_density must be at least 3"));
    }
    if !(safety >= 1.0) {
        return Err(WrapperError::invalid("safety factor must be at least 1"));
    }
    let active: Vec<usize> = (0..d).filter(|&a| region.width(a) > 0.0).collect();
    if active.is_empty() {
        return Err(WrapperError::invalid("region has zero width on every axis"));
    }
    let k = active.len();
    let total = grid_density
        .checked_pow(k as u32)
        .filter(|t| *t <= 50_000_000)
        .ok_or_else(|| WrapperError::invalid("Lipschitz grid too large"))?;
    let step: Vec<f64> = active.iter().map(|&a| region.width(a) / (grid_density - 1) as f64).collect();

    let index = |mut i: usize| {
        let mut idx = vec![0usize; k];
        for j in (0..k).rev() {
            idx[j] = i % grid_density;
            i /= grid_density;
        }
        idx
    };
    let point = |idx: &[usize]| {
        let mut xv: Vec<f64> = (0..d).map(|a| 0.5 * (region.lo[a] + region.hi[a])).collect();
        for (j, &a) in active.iter().enumerate() {
            xv[a] = region.lo[a] + idx[j] as f64 * step[j];
        }
        xv
    };

    let n_dirs = dirs.len();
    let evals: Vec<(Vec<f64>, Vec<f64>)> = (0..total)
        .into_par_iter()
        .map(|i| {
            let post = model.posterior(&xv_to_z(gain, &point(&index(i))), 0.0);
            let sig = dirs.iter().map(|s| sigma_along(&post.var, s)).collect();
            (post.mean, sig)
        })
        .collect();

    let stride = |j: usize| grid_density.pow((k - 1 - j) as u32);
    let (l_mu, l_sigma) = (0..total)
        .into_par_iter()
        .map(|i| {
            let idx = index(i);
            let mut mu2 = 0.0;
            let mut sig2 = vec![0.0; n_dirs];
            for j in 0..k {
                let (p, q) = if idx[j] + 1 < grid_density { (i, i + stride(j)) } else { (i - stride(j), i) };
                for (a, b) in evals[p].0.iter().zip(&evals[q].0) {
                    mu2 += ((b - a) / step[j]).powi(2);
                }
                for (t, (a, b)) in sig2.iter_mut().zip(evals[p].1.iter().zip(&evals[q].1)) {
                    *t += ((b - a) / step[j]).powi(2);
                }
            }
            (mu2.sqrt(), sig2.into_iter().map(f64::sqrt).collect::<Vec<_>>())
        })
        .reduce(
            || (0.0, vec![0.0; n_dirs]),
            |(ma, sa), (mb, sb)| (ma.max(mb), sa.iter().zip(&sb).map(|(a, b)| a.max(*b)).collect()),
        );
    Ok(LipschitzBounds { l_mu: safety * l_mu, l_sigma: l_sigma.iter().map(|l| safety * l).collect() })
}
