use std::sync::Arc;

use super::{GraphSet, LiftedError, LiftedSystem};
use crate::geom::{affine_image, intersect, minkowski_sum, DirectionSet, GeomError, SupportPolytope};
use crate::wrapper::DisturbanceWrapper;

/// `F(Z) = (ÃZ ⊕ B̃ΔV ⊕ D̃W(Z)) ∩ G` with the `B̃ΔV` term precomputed.
pub struct Operator<'a> {
    sys: &'a LiftedSystem,
    graph: &'a GraphSet,
    wrapper: &'a DisturbanceWrapper,
    dirs: Arc<DirectionSet>,
    bdv: SupportPolytope,
}

impl<'a> Operator<'a> {
    pub fn new(
        sys: &'a LiftedSystem,
        graph: &'a GraphSet,
        dv: &SupportPolytope,
        wrapper: &'a DisturbanceWrapper,
        dirs: Arc<DirectionSet>,
    ) -> Result<Self, LiftedError> {
        if dirs.dims() != sys.dims() {
            return Err(LiftedError::invalid("lifted direction set has the wrong dimension"));
        }
        if wrapper.directions().dims() != sys.n || dv.dims() != sys.m {
            return Err(LiftedError::invalid("wrapper or increment set does not match the lifted system"));
        }
        let bdv = affine_image(&sys.bt, dv, &dirs)?;
        Ok(Self { sys, graph, wrapper, dirs, bdv })
    }

    pub fn directions(&self) -> &Arc<DirectionSet> {
        &self.dirs
    }

    pub fn system(&self) -> &LiftedSystem {
        self.sys
    }

    pub fn graph(&self) -> &GraphSet {
        self.graph
    }

    pub fn wrapper(&self) -> &DisturbanceWrapper {
        self.wrapper
    }

    /// Outer bound on `⋃ W(x, Kx + v)` over `(x, v) ∈ Proj_{x,v}(Z)`.
    pub fn w_of_z(&self, z: &SupportPolytope) -> Result<SupportPolytope, LiftedError> {
        w_of_z(z, self.wrapper, self.sys)
    }

    /// `ÃZ ⊕ B̃ΔV ⊕ D̃W(Z)` before the cut by `G`.
    pub fn successor(&self, z: &SupportPolytope) -> Result<SupportPolytope, LiftedError> {
        if !z.directions().same_as(&self.dirs) {
            return Err(LiftedError::invalid("iterate is not on the lifted direction set"));
        }
        let w = self.w_of_z(z)?;
        let az = affine_image(&self.sys.at, z, &self.dirs)?;
        let dw = affine_image(&self.sys.dt, &w, &self.dirs)?;
        Ok(minkowski_sum(&minkowski_sum(&az, &self.bdv)?, &dw)?)
    }

    pub fn apply(&self, z: &SupportPolytope) -> Result<SupportPolytope, LiftedError> {
        Ok(intersect(&self.successor(z)?, self.graph.halfspaces())?)
    }

    /// Largest amount by which the uncut successor of `z` leaves the state
    /// constraints. Positive values mean the cut by `G` was active on the
    /// state block, so `z` is not invariant there.
    pub fn state_excess(&self, z: &SupportPolytope) -> Result<f64, LiftedError> {
        let succ = self.successor(z)?;
        let rows = self.graph.state_rows();
        let hs = self.graph.halfspaces();
        let queries: Vec<Vec<f64>> = rows.clone().map(|j| hs.normal(j).to_vec()).collect();
        let sup = succ.support_batch(&queries)?;
        Ok(rows.zip(sup).map(|(j, h)| h - hs.offsets()[j]).fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Reads the `(x, v)` bounding box off the stored axis supports of `z` and
/// asks the wrapper for the union over that box.
pub fn w_of_z(
    z: &SupportPolytope,
    wrapper: &DisturbanceWrapper,
    sys: &LiftedSystem,
) -> Result<SupportPolytope, LiftedError> {
    if z.dims() != sys.dims() {
        return Err(LiftedError::invalid("iterate has the wrong dimension"));
    }
    let dirs = z.directions();
    let k = sys.n + sys.m;
    let hi: Vec<f64> = (0..k).map(|i| z.value(dirs.axis_index(i, true))).collect();
    let lo: Vec<f64> = (0..k).map(|i| -z.value(dirs.axis_index(i, false))).collect();
    if lo.iter().zip(&hi).any(|(a, b)| a > b) || z.is_empty()? {
        return Err(GeomError::Empty.into());
    }
    Ok(SupportPolytope::new(wrapper.directions().clone(), wrapper.union_supports(&lo, &hi))?)
}

pub fn f_apply(
    sys: &LiftedSystem,
    graph: &GraphSet,
    dv: &SupportPolytope,
    z: &SupportPolytope,
    wrapper: &DisturbanceWrapper,
) -> Result<SupportPolytope, LiftedError> {
    Operator::new(sys, graph, dv, wrapper, z.directions().clone())?.apply(z)
}
