//! Planar double-integrator case study: disturbance physics, simulation,
//! residual extraction, the epoch loop and the closed-loop audit.

mod audit;
mod epochs;
mod physics;
mod sim;

pub use audit::{monte_carlo_invariance, sample_in_tube, McReport, Violation, CONTAINMENT_TOL};
pub use epochs::{
    bootstrap_boxes, collect_excitation, derive_seed, run_epochs, worst_case_box, BoxBaseline, BoxSpec, Built, DirectionPlan, EpochMetrics,
    EpochPlan, EpochRecord, EpochRun, LqrWeights, Scenario, SeedKind,
};
pub use physics::{accel_disturbance, accel_to_state, dlqr, true_disturbance, zoh, DoubleIntegratorConfig, NoiseKind};
pub use sim::{
    extract_residuals, feedback, nominal_step, simulate, trajectory_csv, AuxFeedback, InputPolicy, OpenLoop,
    SelectorFeedback, Trajectory, SANITY_BOUND,
};

use thiserror::Error;

use crate::geom::GeomError;
use crate::gp::GpError;
use crate::lifted::LiftedError;
use crate::wrapper::WrapperError;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("simulation left the sanity box at step {step}")]
    Diverged { step: usize },
    #[error("epoch {epoch}: the tube's successor leaves X by {excess:e}, so the tube is not invariant")]
    ConstraintActive { epoch: usize, excess: f64 },
    #[error("epoch {epoch}: the tube leaves the certified (x, v) region by {excess:e}")]
    TubeOutsideRegion { epoch: usize, excess: f64 },
    #[error(transparent)]
    Lifted(#[from] LiftedError),
    #[error(transparent)]
    Wrapper(#[from] WrapperError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}
