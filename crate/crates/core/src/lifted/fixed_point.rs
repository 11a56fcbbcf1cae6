use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{GraphSet, LiftedError, Operator, PlantModel};
use crate::geom::{contains, project, DirectionSet, SupportPolytope};
use crate::wrapper::DisturbanceWrapper;

/// Slack allowed when checking that an iterate did not grow.
const CHAIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointResult {
    pub z_star: SupportPolytope,
    pub iterations: usize,
    /// `hausdorff_gap(Z_k, Z_{k+1})` for each step.
    pub gaps: Vec<f64>,
    /// `hausdorff_gap(Z_k, Z*)` for each iterate before the last.
    pub gaps_to_limit: Vec<f64>,
    pub proj_x: SupportPolytope,
    pub proj_xv: SupportPolytope,
    /// `Operator::state_excess` at `z_star`.
    pub state_excess: f64,
}

impl FixedPointResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LiftedError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn final_gap(&self) -> f64 {
        self.gaps.last().copied().unwrap_or(0.0)
    }

    /// Whether the state constraints were never active at the limit, which
    /// is what makes the tube robustly invariant.
    pub fn is_state_invariant(&self, tol: f64) -> bool {
        self.state_excess <= tol
    }
}

/// The support representation of the graph set itself. `F(·)` always lands
/// inside `G`, so this seed satisfies `F(Z0) ⊆ Z0` up to LP round-off; the
/// inclusion is still verified.
pub fn seed_z0(op: &Operator<'_>) -> Result<SupportPolytope, LiftedError> {
    let z0 = SupportPolytope::from_halfspaces(op.directions().clone(), op.graph().halfspaces())?;
    verify_seed(op, &z0)?;
    Ok(z0)
}

/// A seed well inside `G` when the wrapper is much tighter than its
/// envelope.
///
/// For each candidate `(x, v)` box `B`, in the given order, freezes the
/// disturbance set at `W_B = ⋃_{B} W`, computes the fixed point `Z_B` of that
/// constant-disturbance operator, and accepts it when `Proj_{x,v}(Z_B) ⊆ B`:
/// then `W(Z_B) ⊆ W_B`, hence `F(Z_B) ⊆ Z_B`. The inclusion is re-verified
/// against `op`. Returns the first accepted seed and its candidate index.
pub fn bootstrap_seed(
    op: &Operator<'_>,
    plant: &PlantModel,
    candidates: &[(Vec<f64>, Vec<f64>)],
    opts: &FixedPointOptions,
) -> Result<Option<(SupportPolytope, usize)>, LiftedError> {
    let sys = op.system();
    let k = sys.n + sys.m;
    let xv_dirs = DirectionSet::axes(k);
    for (idx, (lo, hi)) in candidates.iter().enumerate() {
        if lo.len() != k || hi.len() != k {
            return Err(LiftedError::invalid("bootstrap box has the wrong dimension"));
        }
        let wb = op.wrapper().union_supports(lo, hi);
        let frozen_set = SupportPolytope::new(op.wrapper().directions().clone(), wb)?;
        let frozen = DisturbanceWrapper::constant(&frozen_set, plant.k().clone())?;
        let graph = GraphSet::new(plant, &frozen)?;
        let frozen_op = Operator::new(sys, &graph, plant.dv_set(), &frozen, op.directions().clone())?;
        let z = match seed_z0(&frozen_op).and_then(|z0| fixed_point(&frozen_op, &z0, opts, plant.x_set().directions(), &xv_dirs)) {
            Ok(r) => r.z_star,
            Err(LiftedError::NoInvariantSeed { .. } | LiftedError::NotConverged { .. }) => continue,
            Err(e) => return Err(e),
        };
        let inside = (0..k).all(|i| {
            z.value(op.directions().axis_index(i, true)) <= hi[i] && -z.value(op.directions().axis_index(i, false)) >= lo[i]
        });
        if inside && verify_seed(op, &z).is_ok() {
            return Ok(Some((z, idx)));
        }
    }
    Ok(None)
}

/// Checks `F(Z0) ⊆ Z0` and reports the violating directions otherwise.
pub fn verify_seed(op: &Operator<'_>, z0: &SupportPolytope) -> Result<SupportPolytope, LiftedError> {
    let f = op.apply(z0)?;
    let violations: Vec<usize> =
        (0..z0.len()).filter(|&i| f.value(i) > z0.value(i) + CHAIN_TOL).collect();
    if violations.is_empty() {
        return Ok(f);
    }
    let worst = violations.iter().map(|&i| f.value(i) - z0.value(i)).fold(0.0, f64::max);
    Err(LiftedError::NoInvariantSeed { violations, worst })
}

/// Runs `Z_{k+1} = F(Z_k)` from a verified seed until successive iterates
/// differ by less than `opts.tol`.
///
/// Every step must satisfy `F(Z_k) ⊆ Z_k` within 1e-9; the stored iterate is
/// the per-direction minimum of the two, so the recorded chain is exactly
/// non-increasing.
pub fn fixed_point(
    op: &Operator<'_>,
    z0: &SupportPolytope,
    opts: &FixedPointOptions,
    x_dirs: &Arc<DirectionSet>,
    xv_dirs: &Arc<DirectionSet>,
) -> Result<FixedPointResult, LiftedError> {
    if !(opts.tol > 0.0) {
        return Err(LiftedError::invalid("tolerance must be positive"));
    }
    let sys = op.system();
    if x_dirs.dims() != sys.n || xv_dirs.dims() != sys.n + sys.m {
        return Err(LiftedError::invalid("projection direction sets have the wrong dimension"));
    }
    let mut z = z0.clone();
    let mut next = verify_seed(op, &z)?;
    let mut history = vec![z.clone()];
    let mut gaps = Vec::new();
    loop {
        let iteration = gaps.len();
        for i in 0..z.len() {
            let excess = next.value(i) - z.value(i);
            if excess > CHAIN_TOL {
                return Err(LiftedError::MonotonicityViolation { iteration, direction: i, excess });
            }
        }
        let clamped = next.map_values(|i, v| v.min(z.value(i)))?;
        let gap = z.values().iter().zip(clamped.values()).map(|(a, b)| a - b).fold(0.0, f64::max);
        gaps.push(gap);
        z = clamped;
        history.push(z.clone());
        if gap < opts.tol {
            break;
        }
        if gaps.len() >= opts.max_iter {
            return Err(LiftedError::NotConverged { iterations: gaps.len(), last_gap: gap });
        }
        next = op.apply(&z)?;
    }
    let gaps_to_limit = history[..history.len() - 1]
        .iter()
        .map(|h| h.values().iter().zip(z.values()).map(|(a, b)| a - b).fold(0.0, f64::max))
        .collect();
    let proj_x = project(&z, &sys.x_coords(), x_dirs)?;
    let proj_xv = project(&z, &sys.xv_coords(), xv_dirs)?;
    let state_excess = op.state_excess(&z)?;
    Ok(FixedPointResult { z_star: z, iterations: gaps.len(), gaps, gaps_to_limit, proj_x, proj_xv, state_excess })
}

/// `X ⊖ Z*` in support form: `h_X(s) − h_Z*(s)` per direction. The result
/// may describe an empty set.
pub fn tighten_constraints(plant: &PlantModel, proj_x: &SupportPolytope) -> Result<SupportPolytope, LiftedError> {
    let x = plant.x_set();
    if !x.directions().same_as(proj_x.directions()) {
        return Err(LiftedError::invalid("tube projection must use the state-constraint directions"));
    }
    if !contains(x, proj_x, CHAIN_TOL) {
        return Err(LiftedError::invalid("tube projection is not inside X"));
    }
    Ok(x.map_values(|i, h| h - proj_x.value(i))?)
}
