//! Convex-set calculus on a fixed direction set.
//!
//! A [`SupportPolytope`] stores one support value per direction of a shared
//! [`DirectionSet`] and represents the outer polytope
//! `{y : sᵀy ≤ h(s) for all stored s}`. Minkowski sums, containment and gaps
//! are then per-direction arithmetic; intersections go through an exact
//! [`HalfspaceSystem`] and are re-evaluated on the stored directions by LP.

mod directions;
mod polytope;

pub use directions::{DirectionSet, SplitMix64};
pub use polytope::{
    affine_image, contains, hausdorff_gap, intersect, minkowski_sum, project, HalfspaceSystem,
    SupportPolytope,
};

use thiserror::Error;

use crate::lp::LpError;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("set is empty")]
    Empty,
    #[error("set is unbounded")]
    Unbounded,
    #[error("linear program failed: {0}")]
    Lp(LpError),
    #[error("malformed polytope document: {0}")]
    Format(#[from] serde_json::Error),
}

impl GeomError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidArgument(msg.into())
    }
}

impl From<LpError> for GeomError {
    fn from(e: LpError) -> Self {
        match e {
            LpError::Infeasible => GeomError::Empty,
            LpError::Unbounded => GeomError::Unbounded,
            other => GeomError::Lp(other),
        }
    }
}
