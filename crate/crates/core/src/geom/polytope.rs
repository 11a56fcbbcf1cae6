use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DirectionSet, GeomError};
use crate::lp::LinearProgram;

/// Below this norm a mapped direction `Mᵀs` is treated as zero and gets support 0.
const DEGENERATE_NORM: f64 = 1e-14;

/// `{y : n_j · y ≤ c_j for all rows j}` with arbitrary (not necessarily unit) normals.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceSystem {
    dims: usize,
    normals: Vec<f64>,
    offsets: Vec<f64>,
}

impl HalfspaceSystem {
    /// The whole space (no constraints).
    pub fn new(dims: usize) -> Self {
        Self { dims, normals: Vec::new(), offsets: Vec::new() }
    }

    pub fn from_rows(dims: usize, rows: &[Vec<f64>], offsets: &[f64]) -> Result<Self, GeomError> {
        if rows.len() != offsets.len() {
            return Err(GeomError::invalid(format!(
                "{} normals but {} offsets",
                rows.len(),
                offsets.len()
            )));
        }
        let mut out = Self::new(dims);
        for (r, &c) in rows.iter().zip(offsets) {
            out.try_push(r, c)?;
        }
        Ok(out)
    }

    fn try_push(&mut self, normal: &[f64], offset: f64) -> Result<(), GeomError> {
        if normal.len() != self.dims {
            return Err(GeomError::invalid(format!(
                "normal of length {} in a {}-dim system",
                normal.len(),
                self.dims
            )));
        }
        if !offset.is_finite() || normal.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::invalid("non-finite halfspace"));
        }
        self.normals.extend_from_slice(normal);
        self.offsets.push(offset);
        Ok(())
    }

    /// Appends `normal · y ≤ offset`. Panics on a length mismatch.
    pub fn push(&mut self, normal: &[f64], offset: f64) {
        self.try_push(normal, offset).expect("halfspace dimension mismatch");
    }

    pub fn extend(&mut self, other: &HalfspaceSystem) {
        assert_eq!(self.dims, other.dims, "halfspace dimension mismatch");
        self.normals.extend_from_slice(&other.normals);
        self.offsets.extend_from_slice(&other.offsets);
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn normal(&self, j: usize) -> &[f64] {
        &self.normals[j * self.dims..(j + 1) * self.dims]
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn to_lp(&self) -> LinearProgram {
        LinearProgram::new(self.dims, self.normals.clone(), self.offsets.clone())
    }

    pub fn max_violation(&self, y: &[f64]) -> f64 {
        (0..self.len())
            .map(|j| dot(self.normal(j), y) - self.offsets[j])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains_point(&self, y: &[f64], tol: f64) -> bool {
        self.is_empty() || self.max_violation(y) <= tol
    }
}

/// A compact convex set stored by its support values on a [`DirectionSet`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PolytopeDoc", into = "PolytopeDoc")]
pub struct SupportPolytope {
    dirs: Arc<DirectionSet>,
    h: Vec<f64>,
}

impl SupportPolytope {
    pub fn new(dirs: Arc<DirectionSet>, h: Vec<f64>) -> Result<Self, GeomError> {
        if h.len() != dirs.len() {
            return Err(GeomError::invalid(format!(
                "{} support values for {} directions",
                h.len(),
                dirs.len()
            )));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::Unbounded);
        }
        Ok(Self { dirs, h })
    }

    /// The axis-aligned box `[lo, hi]`, with exact supports on every direction.
    pub fn from_box(dirs: Arc<DirectionSet>, lo: &[f64], hi: &[f64]) -> Result<Self, GeomError> {
        if lo.len() != dirs.dims() || hi.len() != dirs.dims() {
            return Err(GeomError::invalid("box bounds do not match the direction dimension"));
        }
        if lo.iter().zip(hi).any(|(l, u)| l > u) {
            return Err(GeomError::Empty);
        }
        let h = dirs
            .iter()
            .map(|d| {
                d.iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(s, (l, u))| (s * l).max(s * u))
                    .sum()
            })
            .collect();
        Self::new(dirs, h)
    }

    /// The singleton `{p}`.
    pub fn from_point(dirs: Arc<DirectionSet>, p: &[f64]) -> Result<Self, GeomError> {
        Self::from_box(dirs, p, p)
    }

    /// Tight supports of a halfspace system on `dirs`.
    pub fn from_halfspaces(dirs: Arc<DirectionSet>, sys: &HalfspaceSystem) -> Result<Self, GeomError> {
        if sys.dims() != dirs.dims() {
            return Err(GeomError::invalid("halfspace system dimension mismatch"));
        }
        let lp = sys.to_lp();
        let h = (0..dirs.len())
            .into_par_iter()
            .map(|i| Ok(lp.maximize(dirs.dir(i))?.value))
            .collect::<Result<Vec<f64>, GeomError>>()?;
        Self::new(dirs, h)
    }

    pub fn directions(&self) -> &Arc<DirectionSet> {
        &self.dirs
    }

    pub fn values(&self) -> &[f64] {
        &self.h
    }

    pub fn value(&self, i: usize) -> f64 {
        self.h[i]
    }

    pub fn dims(&self) -> usize {
        self.dirs.dims()
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty_repr(&self) -> bool {
        self.h.is_empty()
    }

    /// The outer halfspace description `{y : sᵀy ≤ h(s)}`.
    pub fn halfspaces(&self) -> HalfspaceSystem {
        HalfspaceSystem {
            dims: self.dims(),
            normals: self.dirs.as_rows().to_vec(),
            offsets: self.h.clone(),
        }
    }

    pub fn lp(&self) -> LinearProgram {
        LinearProgram::new(self.dims(), self.dirs.as_rows().to_vec(), self.h.clone())
    }

    pub fn is_empty(&self) -> Result<bool, GeomError> {
        // A stored antipodal pair with h(s) + h(-s) < 0 is the cheap certificate.
        for i in 0..self.dims() {
            let p = self.dirs.axis_index(i, true);
            let m = self.dirs.axis_index(i, false);
            if self.h[p] + self.h[m] < 0.0 {
                return Ok(true);
            }
        }
        Ok(!self.lp().is_feasible()?)
    }

    /// `max_{y ∈ P} sᵀy`: a lookup for stored directions, an LP otherwise.
    pub fn support(&self, s: &[f64]) -> Result<f64, GeomError> {
        if s.len() != self.dims() {
            return Err(GeomError::invalid("direction dimension mismatch"));
        }
        Evaluator::new(self)?.eval(s)
    }

    /// Supports along arbitrary (unnormalized) vectors, positively homogeneous.
    pub fn support_batch(&self, queries: &[Vec<f64>]) -> Result<Vec<f64>, GeomError> {
        if queries.iter().any(|q| q.len() != self.dims()) {
            return Err(GeomError::invalid("direction dimension mismatch"));
        }
        let ev = Evaluator::new(self)?;
        queries.par_iter().map(|q| ev.eval(q)).collect()
    }

    pub fn contains_point(&self, y: &[f64], tol: f64) -> bool {
        self.dirs.iter().zip(&self.h).all(|(d, h)| dot(d, y) <= h + tol)
    }

    /// Applies `f` to every support value.
    pub fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Result<Self, GeomError> {
        let h = self.h.iter().enumerate().map(|(i, &v)| f(i, v)).collect();
        Self::new(self.dirs.clone(), h)
    }

    /// `{-y : y ∈ P}`.
    pub fn negated(&self) -> Result<Self, GeomError> {
        let queries: Vec<Vec<f64>> = self.dirs.iter().map(|d| d.iter().map(|v| -v).collect()).collect();
        let h = self.support_batch(&queries)?;
        Self::new(self.dirs.clone(), h)
    }

    /// Axis-aligned bounding box read off the stored axis directions.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        (0..self.dims())
            .map(|i| {
                (
                    -self.h[self.dirs.axis_index(i, false)],
                    self.h[self.dirs.axis_index(i, true)],
                )
            })
            .unzip()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("support polytope serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GeomError> {
        Ok(serde_json::from_str(text)?)
    }
}

struct Evaluator<'a> {
    poly: &'a SupportPolytope,
    lp: LinearProgram,
}

impl<'a> Evaluator<'a> {
    fn new(poly: &'a SupportPolytope) -> Result<Self, GeomError> {
        if poly.is_empty()? {
            return Err(GeomError::Empty);
        }
        Ok(Self { poly, lp: poly.lp() })
    }

    fn eval(&self, t: &[f64]) -> Result<f64, GeomError> {
        let norm = dot(t, t).sqrt();
        if norm < DEGENERATE_NORM {
            return Ok(0.0);
        }
        let unit: Vec<f64> = t.iter().map(|v| v / norm).collect();
        if let Some(i) = self.poly.dirs.find(&unit) {
            return Ok(norm * self.poly.h[i]);
        }
        Ok(self.lp.maximize(t)?.value)
    }
}

fn check_same(a: &SupportPolytope, b: &SupportPolytope) -> Result<(), GeomError> {
    if a.dirs.same_as(&b.dirs) {
        Ok(())
    } else {
        Err(GeomError::invalid("operands use different direction sets"))
    }
}

/// `A ⊕ B`: support values add per direction.
pub fn minkowski_sum(a: &SupportPolytope, b: &SupportPolytope) -> Result<SupportPolytope, GeomError> {
    check_same(a, b)?;
    let h = a.h.iter().zip(&b.h).map(|(x, y)| x + y).collect();
    SupportPolytope::new(a.dirs.clone(), h)
}

/// Outer support representation of `M·P` on `out_dirs`:
/// `h(s) = h_P(Mᵀs)`, which is 0 when `Mᵀs` vanishes.
pub fn affine_image(
    m: &DMatrix<f64>,
    p: &SupportPolytope,
    out_dirs: &Arc<DirectionSet>,
) -> Result<SupportPolytope, GeomError> {
    if m.ncols() != p.dims() || m.nrows() != out_dirs.dims() {
        return Err(GeomError::invalid(format!(
            "{}x{} map from {} to {} dims",
            m.nrows(),
            m.ncols(),
            p.dims(),
            out_dirs.dims()
        )));
    }
    let queries: Vec<Vec<f64>> = out_dirs
        .iter()
        .map(|s| (0..m.ncols()).map(|c| (0..m.nrows()).map(|r| m[(r, c)] * s[r]).sum()).collect())
        .collect();
    let h = p.support_batch(&queries)?;
    SupportPolytope::new(out_dirs.clone(), h)
}

/// `P ∩ H`, re-evaluated exactly on the stored directions of `P`.
pub fn intersect(p: &SupportPolytope, cut: &HalfspaceSystem) -> Result<SupportPolytope, GeomError> {
    if cut.dims() != p.dims() {
        return Err(GeomError::invalid("halfspace system dimension mismatch"));
    }
    let mut sys = p.halfspaces();
    sys.extend(cut);
    SupportPolytope::from_halfspaces(p.dirs.clone(), &sys)
}

/// Orthogonal projection onto the listed coordinates.
pub fn project(
    p: &SupportPolytope,
    coords: &[usize],
    out_dirs: &Arc<DirectionSet>,
) -> Result<SupportPolytope, GeomError> {
    if out_dirs.dims() != coords.len() {
        return Err(GeomError::invalid("output directions do not match the coordinate count"));
    }
    for (k, &c) in coords.iter().enumerate() {
        if c >= p.dims() {
            return Err(GeomError::invalid(format!("coordinate {c} out of range for {} dims", p.dims())));
        }
        if coords[..k].contains(&c) {
            return Err(GeomError::invalid(format!("coordinate {c} repeated")));
        }
    }
    let queries: Vec<Vec<f64>> = out_dirs
        .iter()
        .map(|s| {
            let mut lifted = vec![0.0; p.dims()];
            for (&c, &v) in coords.iter().zip(s) {
                lifted[c] = v;
            }
            lifted
        })
        .collect();
    let h = p.support_batch(&queries)?;
    SupportPolytope::new(out_dirs.clone(), h)
}

/// `h_inner(s) ≤ h_outer(s) + tol` on every stored direction.
///
/// Panics when the operands live on different direction sets.
pub fn contains(outer: &SupportPolytope, inner: &SupportPolytope, tol: f64) -> bool {
    assert!(
        outer.dirs.same_as(&inner.dirs),
        "containment test across different direction sets"
    );
    outer.h.iter().zip(&inner.h).all(|(o, i)| *i <= o + tol)
}

/// `max_s |h_A(s) − h_B(s)|`, an upper bound on the Hausdorff distance
/// between the two outer polytopes restricted to the stored directions.
pub fn hausdorff_gap(a: &SupportPolytope, b: &SupportPolytope) -> Result<f64, GeomError> {
    check_same(a, b)?;
    if a.is_empty()? || b.is_empty()? {
        return Err(GeomError::Empty);
    }
    Ok(a.h.iter().zip(&b.h).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolytopeDoc {
    dims: usize,
    n_f: usize,
    seed: Option<u64>,
    dirs: Vec<Vec<f64>>,
    h: Vec<f64>,
}

impl From<SupportPolytope> for PolytopeDoc {
    fn from(p: SupportPolytope) -> Self {
        Self {
            dims: p.dims(),
            n_f: p.len(),
            seed: p.dirs.seed(),
            dirs: p.dirs.iter().map(|d| d.to_vec()).collect(),
            h: p.h,
        }
    }
}

impl TryFrom<PolytopeDoc> for SupportPolytope {
    type Error = GeomError;

    fn try_from(doc: PolytopeDoc) -> Result<Self, GeomError> {
        if doc.dirs.len() != doc.n_f {
            return Err(GeomError::invalid(format!(
                "n_f = {} but {} directions listed",
                doc.n_f,
                doc.dirs.len()
            )));
        }
        let dirs = DirectionSet::from_parts(doc.dims, doc.seed, &doc.dirs)?;
        SupportPolytope::new(dirs, doc.h)
    }
}
