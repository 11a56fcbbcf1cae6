//! The lifted system over `ξ = (x, v, w)`, its graph constraint, the
//! outside-in operator and its fixed point, and the state feedback read off
//! the fixed point.
//!
//! Coordinates of `ξ` are laid out as `x` (n), then `v` (m), then `w` (n).

mod fixed_point;
mod model;
mod operator;
mod selector;
mod system;

pub use fixed_point::{bootstrap_seed, fixed_point, seed_z0, tighten_constraints, verify_seed, FixedPointOptions, FixedPointResult};
pub use model::PlantModel;
pub use operator::{f_apply, w_of_z, Operator};
pub use selector::SelectorPolicy;
pub use system::{GraphSet, LiftedSystem};

use thiserror::Error;

use crate::geom::GeomError;
use crate::wrapper::WrapperError;

#[derive(Debug, Error)]
pub enum LiftedError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("A + BK is not Schur (spectral radius {0})")]
    NotSchur(f64),
    #[error("no invariant seed: F(Z0) exceeds Z0 on {} directions, worst by {worst:e}", violations.len())]
    NoInvariantSeed { violations: Vec<usize>, worst: f64 },
    #[error("iterate {iteration} grew along direction {direction} by {excess:e}")]
    MonotonicityViolation { iteration: usize, direction: usize, excess: f64 },
    #[error("no convergence after {iterations} iterations (last gap {last_gap:e})")]
    NotConverged { iterations: usize, last_gap: f64 },
    #[error("state is outside the tube projection (violation {violation:e})")]
    OutOfTube { violation: f64 },
    #[error("empty tube slice at an in-tube state (smallest violation {min_violation:e})")]
    SelectorInfeasible { min_violation: f64 },
    #[error("quadratic program failed: {0}")]
    Qp(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Wrapper(#[from] WrapperError),
    #[error("malformed fixed-point document: {0}")]
    Format(#[from] serde_json::Error),
}

impl LiftedError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidArgument(msg.into())
    }
}
