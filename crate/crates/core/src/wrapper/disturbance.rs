use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{chi2_quantile, ellipsoid_support, xv_to_z, AnchorGrid, LipschitzBounds, RegionBox, WrapperError};
use crate::geom::{DirectionSet, SupportPolytope};
use crate::gp::{GpModel, PosteriorPoint};

const SCHEMA: u32 = 1;

/// Grid and risk settings for [`build_wrapper`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrapperSettings {
    pub eps: f64,
    pub alpha_epoch: f64,
    pub max_anchors: usize,
}

impl Default for WrapperSettings {
    fn default() -> Self {
        Self { eps: 0.25, alpha_epoch: 0.05, max_anchors: 10_000 }
    }
}

/// Anchor supports and inflation slopes of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Layer {
    /// Row-major `anchors × directions`.
    supports: Vec<f64>,
    /// `‖s‖·L_μ + c·L_σ(s)` per direction.
    slope: Vec<f64>,
}

/// Epoch-frozen map from `(x, v)` to an outer disturbance polytope.
///
/// Holds the current epoch's anchor supports plus, after
/// [`nest_within`](Self::nest_within), those of earlier epochs; every bound
/// is the minimum over the held layers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "WrapperDoc", try_from = "WrapperDoc")]
pub struct DisturbanceWrapper {
    dirs: Arc<DirectionSet>,
    gain: DMatrix<f64>,
    grid: Option<AnchorGrid>,
    lips: LipschitzBounds,
    c: f64,
    layers: Vec<Layer>,
    envelope: Vec<f64>,
}

/// `h(z; s)` for every stored `s`, at radius `c`.
pub fn posterior_supports(post: &PosteriorPoint, c: f64, dirs: &DirectionSet) -> Vec<f64> {
    dirs.iter().map(|s| ellipsoid_support(&post.mean, &post.var, c, s)).collect()
}

/// Lays the anchor grid on `region`, evaluates per-anchor supports at the
/// per-anchor risk `alpha_epoch / |anchors|`, and forms the envelope.
pub fn build_wrapper(
    model: &GpModel,
    region: &RegionBox,
    gain: &DMatrix<f64>,
    dirs: &Arc<DirectionSet>,
    settings: &WrapperSettings,
    lips: LipschitzBounds,
) -> Result<DisturbanceWrapper, WrapperError> {
    if model.dim_z() != region.dims() || gain.ncols() + gain.nrows() != region.dims() {
        return Err(WrapperError::invalid("region, gain and model dimensions disagree"));
    }
    let grid = AnchorGrid::build(region.clone(), settings.eps, settings.alpha_epoch, settings.max_anchors)?;
    let c = chi2_quantile(model.dim_w(), 1.0 - grid.alpha_anc())?.sqrt();
    let posts: Vec<PosteriorPoint> = (0..grid.len())
        .into_par_iter()
        .map(|i| model.posterior(&xv_to_z(gain, &grid.anchor(i)), 0.0))
        .collect();
    DisturbanceWrapper::from_posteriors(grid, gain.clone(), dirs.clone(), lips, c, &posts)
}

impl DisturbanceWrapper {
    /// Wrapper from per-anchor posteriors, in anchor order.
    pub fn from_posteriors(
        grid: AnchorGrid,
        gain: DMatrix<f64>,
        dirs: Arc<DirectionSet>,
        lips: LipschitzBounds,
        c: f64,
        posts: &[PosteriorPoint],
    ) -> Result<Self, WrapperError> {
        if posts.len() != grid.len() {
            return Err(WrapperError::invalid("one posterior per anchor required"));
        }
        if lips.l_sigma.len() != dirs.len() || lips.l_mu < 0.0 || lips.l_sigma.iter().any(|l| !(*l >= 0.0)) {
            return Err(WrapperError::invalid("Lipschitz bounds must be non-negative, one per direction"));
        }
        if posts.iter().any(|p| p.mean.len() != dirs.dims()) {
            return Err(WrapperError::invalid("posterior dimension differs from the direction set"));
        }
        let supports: Vec<f64> = posts.iter().flat_map(|p| posterior_supports(p, c, &dirs)).collect();
        let slope: Vec<f64> = dirs
            .iter()
            .zip(&lips.l_sigma)
            .map(|(s, ls)| s.iter().map(|x| x * x).sum::<f64>().sqrt() * lips.l_mu + c * ls)
            .collect();
        let layer = Layer { supports, slope };
        let envelope = layer_envelope(&layer, dirs.len(), grid.eps());
        Ok(Self { dirs, gain, grid: Some(grid), lips, c, layers: vec![layer], envelope })
    }

    /// The same set `w` at every `(x, v)`.
    pub fn constant(w: &SupportPolytope, gain: DMatrix<f64>) -> Result<Self, WrapperError> {
        if w.is_empty()? {
            return Err(WrapperError::invalid("constant disturbance set is empty"));
        }
        let n = w.len();
        Ok(Self {
            dirs: w.directions().clone(),
            gain,
            grid: None,
            lips: LipschitzBounds::zero(n),
            c: 0.0,
            layers: vec![Layer { supports: w.values().to_vec(), slope: vec![0.0; n] }],
            envelope: w.values().to_vec(),
        })
    }

    pub fn directions(&self) -> &Arc<DirectionSet> {
        &self.dirs
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// `None` for a constant wrapper.
    pub fn grid(&self) -> Option<&AnchorGrid> {
        self.grid.as_ref()
    }

    pub fn lipschitz(&self) -> &LipschitzBounds {
        &self.lips
    }

    /// `sqrt(χ²_{n, 1−α_anc})`.
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_state(&self) -> usize {
        self.gain.ncols()
    }

    pub fn n_aux(&self) -> usize {
        self.gain.nrows()
    }

    pub fn envelope(&self) -> &[f64] {
        &self.envelope
    }

    pub fn envelope_polytope(&self) -> SupportPolytope {
        SupportPolytope::new(self.dirs.clone(), self.envelope.clone()).expect("envelope matches its directions")
    }

    /// Supports of anchor `a` in the newest layer.
    pub fn anchor_supports(&self, a: usize) -> &[f64] {
        let n = self.dirs.len();
        &self.layers[0].supports[a * n..(a + 1) * n]
    }

    fn bound(&self, a: usize, j: usize, dist: f64) -> f64 {
        let n = self.dirs.len();
        self.layers
            .iter()
            .map(|l| l.supports[a * n + j] + l.slope[j] * dist)
            .fold(f64::INFINITY, f64::min)
    }

    /// Per-point bound at `(x, v)`: cell anchor support plus the Lipschitz
    /// cone out to the distance from that anchor. Outside the region this is
    /// the envelope.
    pub fn query_supports(&self, xv: &[f64]) -> Vec<f64> {
        let Some(grid) = &self.grid else {
            return self.envelope.clone();
        };
        let Some(a) = grid.nearest(xv) else {
            return self.envelope.clone();
        };
        let z = grid.anchor(a);
        let dist = z.iter().zip(xv).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        (0..self.dirs.len()).map(|j| self.bound(a, j, dist)).collect()
    }

    pub fn query_support(&self, x: &[f64], v: &[f64], j: usize) -> f64 {
        let xv: Vec<f64> = x.iter().chain(v).copied().collect();
        self.query_supports(&xv)[j]
    }

    /// Supports of a set containing every `query_supports(xv)` polytope for
    /// `xv` in the box `[lo, hi]`. Monotone in the box; never above the
    /// envelope.
    pub fn union_supports(&self, lo: &[f64], hi: &[f64]) -> Vec<f64> {
        let Some(grid) = &self.grid else {
            return self.envelope.clone();
        };
        if lo.iter().zip(hi).any(|(a, b)| a > b) || !grid.region().contains_box(lo, hi, 1e-12) {
            return self.envelope.clone();
        }
        let cells = grid.cells_meeting(lo, hi);
        (0..self.dirs.len())
            .map(|j| {
                let v = cells.iter().map(|&(a, d)| self.bound(a, j, d)).fold(f64::NEG_INFINITY, f64::max);
                v.min(self.envelope[j])
            })
            .collect()
    }

    /// Keeps every bound of `prev` as an extra cap, so that this wrapper is
    /// contained in `prev` everywhere.
    pub fn nest_within(&mut self, prev: &DisturbanceWrapper) -> Result<(), WrapperError> {
        if !self.dirs.same_as(&prev.dirs) {
            return Err(WrapperError::Incompatible("direction sets differ".into()));
        }
        if self.grid != prev.grid {
            return Err(WrapperError::Incompatible("anchor grids differ".into()));
        }
        if self.gain != prev.gain {
            return Err(WrapperError::Incompatible("feedback gains differ".into()));
        }
        self.layers.extend(prev.layers.iter().cloned());
        for (e, p) in self.envelope.iter_mut().zip(&prev.envelope) {
            *e = e.min(*p);
        }
        Ok(())
    }

    /// Largest `h(z; s) − h̄(s)` over `points` for the newest layer's model.
    pub fn envelope_excess(&self, model: &GpModel, points: &[Vec<f64>]) -> f64 {
        points
            .par_iter()
            .map(|xv| {
                let post = model.posterior(&xv_to_z(&self.gain, xv), 0.0);
                posterior_supports(&post, self.c, &self.dirs)
                    .iter()
                    .zip(&self.envelope)
                    .map(|(h, e)| h - e)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .reduce(|| f64::NEG_INFINITY, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&WrapperDoc::from(self)).expect("wrapper serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, WrapperError> {
        let doc: WrapperDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

fn layer_envelope(layer: &Layer, n: usize, eps: f64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let top = layer.supports.iter().skip(j).step_by(n).copied().fold(f64::NEG_INFINITY, f64::max);
            top + layer.slope[j] * eps
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WrapperDoc {
    schema: u32,
    dir_seed: Option<u64>,
    dirs: Vec<Vec<f64>>,
    gain: Vec<Vec<f64>>,
    grid: Option<AnchorGrid>,
    lipschitz: LipschitzBounds,
    c: f64,
    layers: Vec<Layer>,
    envelope: Vec<f64>,
}

impl From<&DisturbanceWrapper> for WrapperDoc {
    fn from(w: &DisturbanceWrapper) -> Self {
        Self {
            schema: SCHEMA,
            dir_seed: w.dirs.seed(),
            dirs: w.dirs.iter().map(|d| d.to_vec()).collect(),
            gain: w.gain.row_iter().map(|r| r.iter().copied().collect()).collect(),
            grid: w.grid.clone(),
            lipschitz: w.lips.clone(),
            c: w.c,
            layers: w.layers.clone(),
            envelope: w.envelope.clone(),
        }
    }
}

impl From<DisturbanceWrapper> for WrapperDoc {
    fn from(w: DisturbanceWrapper) -> Self {
        Self::from(&w)
    }
}

impl TryFrom<WrapperDoc> for DisturbanceWrapper {
    type Error = WrapperError;

    fn try_from(d: WrapperDoc) -> Result<Self, WrapperError> {
        if d.schema != SCHEMA {
            return Err(WrapperError::invalid(format!("unsupported wrapper schema {}", d.schema)));
        }
        let dim = d.dirs.first().map(|v| v.len()).unwrap_or(0);
        let dirs = DirectionSet::from_parts(dim, d.dir_seed, &d.dirs)?;
        let rows = d.gain.len();
        let cols = d.gain.first().map(|r| r.len()).unwrap_or(0);
        if d.gain.iter().any(|r| r.len() != cols) {
            return Err(WrapperError::invalid("ragged gain matrix"));
        }
        let gain = DMatrix::from_fn(rows, cols, |r, c| d.gain[r][c]);
        let n = dirs.len();
        let anchors = d.grid.as_ref().map(|g| g.len()).unwrap_or(1);
        let ok = d.envelope.len() == n
            && d.lipschitz.l_sigma.len() == n
            && !d.layers.is_empty()
            && d.layers.iter().all(|l| l.slope.len() == n && l.supports.len() == anchors * n)
            && d.grid.as_ref().map_or(true, |g| g.dims() == rows + cols);
        if !ok {
            return Err(WrapperError::invalid("wrapper arrays have inconsistent sizes"));
        }
        Ok(Self {
            dirs,
            gain,
            grid: d.grid,
            lips: d.lipschitz,
            c: d.c,
            layers: d.layers,
            envelope: d.envelope,
        })
    }
}
