//! From GP posteriors to epoch-frozen disturbance sets.
//!
//! A posterior at `z` gives a credible ellipsoid; its supports on a fixed
//! direction set give a polytope. Evaluating those supports on an anchor grid
//! over the design region and inflating by Lipschitz bounds times the covering
//! radius gives a bound valid on the whole region at once.

mod anchors;
mod chi2;
mod disturbance;
mod ellipsoid;
mod lipschitz;

pub use anchors::{AnchorGrid, RegionBox};
pub use chi2::{chi2_cdf, chi2_quantile, incomplete_gamma, ln_gamma};
pub use disturbance::{build_wrapper, posterior_supports, DisturbanceWrapper, WrapperSettings};
pub use ellipsoid::{ellipsoid_at, ellipsoid_support, CredibleEllipsoid};
pub use lipschitz::{estimate_lipschitz, sigma_along, xv_to_z, LipschitzBounds};

use thiserror::Error;

use crate::geom::GeomError;
use crate::gp::GpError;

#[derive(Debug, Error)]
pub enum WrapperError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("anchor grid for eps = {eps} needs more than {max_anchors} anchors; raise eps")]
    GridTooFine { eps: f64, max_anchors: usize },
    #[error("wrappers are not comparable: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("malformed wrapper document: {0}")]
    Format(#[from] serde_json::Error),
}

impl WrapperError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidArgument(msg.into())
    }
}
