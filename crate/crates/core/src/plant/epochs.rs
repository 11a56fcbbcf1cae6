use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    accel_disturbance, dlqr, extract_residuals, simulate, zoh, AuxFeedback, DoubleIntegratorConfig, PlantError,
};
use crate::geom::{hausdorff_gap, DirectionSet, SupportPolytope};
use crate::gp::{Dataset, GpModel, KernelParams, SIGMA_MIN2};
use crate::lifted::{
    bootstrap_seed, fixed_point, seed_z0, verify_seed, FixedPointOptions, FixedPointResult, GraphSet, LiftedError, LiftedSystem,
    Operator, PlantModel,
};
use crate::wrapper::{build_wrapper, estimate_lipschitz, xv_to_z, DisturbanceWrapper, RegionBox, WrapperSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSpec {
    pub fn symmetric(half: &[f64]) -> Self {
        Self { lo: half.iter().map(|h| -h).collect(), hi: half.to_vec() }
    }

    fn check(&self, field: &str, dims: usize) -> Result<(), PlantError> {
        if self.lo.len() != dims || self.hi.len() != dims {
            return Err(PlantError::Config(format!("{field}: expected {dims} bounds per side")));
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(PlantError::Config(format!("{field}: need finite lo <= hi")));
        }
        Ok(())
    }

    fn polytope(&self, dirs: &Arc<DirectionSet>) -> Result<SupportPolytope, PlantError> {
        Ok(SupportPolytope::from_box(dirs.clone(), &self.lo, &self.hi)?)
    }
}

/// Diagonal LQR weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrWeights {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirectionPlan {
    /// Directions for `X` (4-dim).
    pub x: usize,
    /// Directions for `V` (2-dim).
    pub v: usize,
    /// Directions for the disturbance polytopes (4-dim).
    pub w: usize,
    /// Length of the closed-loop chains grown from the signed state axes.
    pub chain_depth: usize,
    /// Seeded directions added to the lifted set on top of the axes, the
    /// graph normals and the chains.
    pub lifted_random: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpochPlan {
    pub epochs: usize,
    pub new_points_per_epoch: usize,
    /// Steps per excitation rollout before the state is re-drawn.
    pub segment_len: usize,
    /// Box over `(x, v)` on which the wrapper is certified; excitation draws
    /// initial states and auxiliary inputs from it.
    pub region: BoxSpec,
    pub alpha_epoch: f64,
    pub eps: f64,
    pub max_anchors: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub lipschitz_density: usize,
    pub lipschitz_safety: f64,
    /// Floor on posterior variances.
    pub sigma_min2: f64,
    /// Region scale factors tried, in order, for a bootstrap seed when no
    /// warm start applies; empty to always start from the graph set.
    pub bootstrap: Vec<f64>,
}

/// Everything needed to reproduce a multi-epoch synthesis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub physics: DoubleIntegratorConfig,
    pub lqr: LqrWeights,
    pub x_box: BoxSpec,
    pub u_box: BoxSpec,
    pub v_box: BoxSpec,
    /// One per state component.
    pub kernels: Vec<KernelParams>,
    pub plan: EpochPlan,
    pub directions: DirectionPlan,
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self { q: vec![1.0; 4], r: vec![1.0; 2] }
    }
}

impl Default for DirectionPlan {
    fn default() -> Self {
        Self { x: 8, v: 4, w: 16, chain_depth: 10, lifted_random: 0, seed: 7 }
    }
}

impl Default for EpochPlan {
    fn default() -> Self {
        Self {
            epochs: 3,
            new_points_per_epoch: 167,
            segment_len: 4,
            region: BoxSpec::symmetric(&[0.35, 0.35, 0.35, 0.35, 0.01, 0.01]),
            alpha_epoch: 0.05,
            eps: 0.07,
            max_anchors: 20_000,
            tol: 1e-6,
            max_iter: 1000,
            lipschitz_density: 4,
            lipschitz_safety: 1.5,
            sigma_min2: SIGMA_MIN2,
            bootstrap: vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        }
    }
}

impl Default for Scenario {
    fn default() -> Self {
        let physics = DoubleIntegratorConfig::default();
        let dt = physics.dt;
        // Residual scale per state component: B maps an acceleration of
        // order 0.15 m/s² into the state.
        let (pos, vel) = (0.5 * dt * dt * 0.15, dt * 0.15);
        let noise = |g: f64| (g * physics.noise_std).powi(2);
        let kernels = vec![
            KernelParams::squared_exponential(pos * pos, 2.0, noise(0.5 * dt * dt)),
            KernelParams::squared_exponential(pos * pos, 2.0, noise(0.5 * dt * dt)),
            KernelParams::squared_exponential(vel * vel, 2.0, noise(dt)),
            KernelParams::squared_exponential(vel * vel, 2.0, noise(dt)),
        ];
        Self {
            physics,
            lqr: LqrWeights::default(),
            x_box: BoxSpec::symmetric(&[2.0, 2.0, 2.0, 2.0]),
            u_box: BoxSpec::symmetric(&[3.0, 3.0]),
            v_box: BoxSpec::symmetric(&[0.01, 0.01]),
            kernels,
            plan: EpochPlan::default(),
            directions: DirectionPlan::default(),
        }
    }
}

impl Scenario {
    /// Validates every field; messages start with the offending field path.
    pub fn validate(&self) -> Result<(), PlantError> {
        self.physics.validate()?;
        let err = |m: String| Err(PlantError::Config(m));
        if self.lqr.q.len() != 4 || self.lqr.r.len() != 2 {
            return err("lqr: q needs 4 and r needs 2 diagonal entries".into());
        }
        if self.lqr.q.iter().any(|v| !(*v >= 0.0)) || self.lqr.r.iter().any(|v| !(*v > 0.0)) {
            return err("lqr: q must be non-negative and r positive".into());
        }
        self.x_box.check("x_box", 4)?;
        self.u_box.check("u_box", 2)?;
        self.v_box.check("v_box", 2)?;
        if self.kernels.len() != 4 {
            return err(format!("kernels: expected 4 entries, got {}", self.kernels.len()));
        }
        for (i, k) in self.kernels.iter().enumerate() {
            k.validate().map_err(|e| PlantError::Config(format!("kernels[{i}]: {e}")))?;
        }
        let p = &self.plan;
        if p.epochs == 0 {
            return err("plan.epochs: must be at least 1".into());
        }
        if p.new_points_per_epoch == 0 {
            return err("plan.new_points_per_epoch: must be at least 1".into());
        }
        if p.segment_len == 0 {
            return err("plan.segment_len: must be at least 1".into());
        }
        p.region.check("plan.region", 6)?;
        if !(p.alpha_epoch > 0.0 && p.alpha_epoch < 1.0) {
            return err(format!("plan.alpha_epoch: must lie in (0, 1), got {}", p.alpha_epoch));
        }
        if !(p.eps > 0.0 && p.eps.is_finite()) {
            return err("plan.eps: must be positive".into());
        }
        if p.max_anchors == 0 {
            return err("plan.max_anchors: must be at least 1".into());
        }
        if !(p.tol > 0.0 && p.tol.is_finite()) {
            return err("plan.tol: must be positive".into());
        }
        if p.max_iter == 0 {
            return err("plan.max_iter: must be at least 1".into());
        }
        if p.lipschitz_density < 3 {
            return err("plan.lipschitz_density: must be at least 3".into());
        }
        if !(p.lipschitz_safety >= 1.0) {
            return err("plan.lipschitz_safety: must be at least 1".into());
        }
        if !(p.sigma_min2 > 0.0 && p.sigma_min2.is_finite()) {
            return err("plan.sigma_min2: must be positive".into());
        }
        if p.bootstrap.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return err("plan.bootstrap: factors must lie in (0, 1]".into());
        }
        let d = &self.directions;
        if d.x < 8 || d.w < 8 || d.v < 4 {
            return err("directions: need at least the signed axes (x >= 8, w >= 8, v >= 4)".into());
        }
        Ok(())
    }

    /// Discretized plant, LQR gain, constraint sets and the base direction
    /// sets.
    pub fn build(&self) -> Result<Built, PlantError> {
        self.validate()?;
        let (a, b) = zoh(self.physics.dt);
        let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.lqr.q.clone()));
        let r = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.lqr.r.clone()));
        let k = dlqr(&a, &b, &q, &r)?;
        let d = &self.directions;
        let x_dirs = DirectionSet::generate(4, d.x, d.seed)?;
        let u_dirs = DirectionSet::axes(2);
        let v_dirs = DirectionSet::generate(2, d.v, d.seed.wrapping_add(1))?;
        let w_dirs = DirectionSet::generate(4, d.w, d.seed.wrapping_add(2))?;
        let plant = PlantModel::new(
            a,
            b,
            k,
            self.x_box.polytope(&x_dirs)?,
            self.u_box.polytope(&u_dirs)?,
            self.v_box.polytope(&v_dirs)?,
        )?;
        let region = RegionBox::new(self.plan.region.lo.clone(), self.plan.region.hi.clone())?;
        Ok(Built { plant, w_dirs, region })
    }

    fn wrapper_settings(&self) -> WrapperSettings {
        WrapperSettings { eps: self.plan.eps, alpha_epoch: self.plan.alpha_epoch, max_anchors: self.plan.max_anchors }
    }

    fn fp_options(&self) -> FixedPointOptions {
        FixedPointOptions { tol: self.plan.tol, max_iter: self.plan.max_iter }
    }
}

pub struct Built {
    pub plant: PlantModel,
    pub w_dirs: Arc<DirectionSet>,
    pub region: RegionBox,
}

/// Where an epoch's outside-in iteration started.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedKind {
    /// The previous epoch's tube.
    Warm,
    /// A frozen-disturbance fixed point on the region scaled by this factor.
    Bootstrap(f64),
    /// The graph set itself.
    Graph,
}

/// `(x, v)` boxes for [`bootstrap_seed`]: the state part of the region
/// scaled about its centre by each factor, the auxiliary part kept whole.
pub fn bootstrap_boxes(region: &RegionBox, factors: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = 4;
    factors
        .iter()
        .map(|f| {
            let (mut lo, mut hi) = (region.lo.clone(), region.hi.clone());
            for i in 0..n {
                let (c, h) = (0.5 * (region.lo[i] + region.hi[i]), 0.5 * (region.hi[i] - region.lo[i]));
                lo[i] = c - f * h;
                hi[i] = c + f * h;
            }
            (lo, hi)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochMetrics {
    pub n_data: usize,
    pub iterations: usize,
    pub final_gap: f64,
    pub warm_started: bool,
    pub seed: SeedKind,
    /// Number of lifted directions, i.e. halfspaces describing `Z*`.
    pub facets: usize,
    pub anchors: usize,
    pub radius: f64,
    pub alpha_uniform: f64,
    /// Mean of `h_{proj_x}` over the state directions.
    pub mean_support: f64,
    /// Mean of `(h(+e_i) + h(−e_i)) / 2` over the state axes.
    pub mean_half_width: f64,
    /// `mean_support` divided by the same mean for the worst-case-box tube.
    pub conservatism_ratio: f64,
    /// `max_s |h_{Z*_{q−1}}(s) − h_{Z*_q}(s)|`.
    pub hausdorff_to_prev: Option<f64>,
    pub state_excess: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub q: usize,
    pub dataset: Dataset,
    pub wrapper: DisturbanceWrapper,
    pub result: FixedPointResult,
    pub metrics: EpochMetrics,
}

/// Tube under a constant box disturbance set that bounds the true
/// disturbance (noise at its bound) everywhere on the region.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxBaseline {
    pub w_box: Vec<f64>,
    pub proj_x: SupportPolytope,
    pub mean_support: f64,
    pub iterations: usize,
}

#[derive(Debug)]
pub struct EpochRun {
    pub baseline: BoxBaseline,
    pub records: Vec<EpochRecord>,
    /// Set when an epoch failed; `records` then holds the completed ones.
    pub error: Option<PlantError>,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial or per-segment seed derived from a run seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    mix(seed, stream, index)
}

/// Excitation data for epoch `q`: rollouts of `segment_len` steps from
/// states drawn on the region, under `u = Kx + v` with `v` drawn on the
/// region's auxiliary box at every step.
pub fn collect_excitation(
    scenario: &Scenario,
    plant: &PlantModel,
    q: usize,
    points: usize,
    t0: f64,
    seed: u64,
) -> Result<Dataset, PlantError> {
    let region = &scenario.plan.region;
    let mut data = Dataset::new(6, 4);
    let mut segment = 0u64;
    while data.len() < points {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, q as u64 + 1, segment));
        let x0: Vec<f64> = (0..4).map(|i| rng.gen_range(region.lo[i]..=region.hi[i])).collect();
        let steps = scenario.plan.segment_len.min(points - data.len());
        let noise_seed = rng.gen();
        let mut policy = AuxFeedback {
            plant,
            aux: |_k: usize, _x: &[f64]| Ok((4..6).map(|i| rng.gen_range(region.lo[i]..=region.hi[i])).collect()),
        };
        let mut traj = simulate(&scenario.physics, plant, &mut policy, &x0, steps, noise_seed)?;
        traj.t0 = t0 + data.len() as f64 * scenario.physics.dt;
        data.extend(&extract_residuals(plant, &traj, scenario.physics.dt)?)?;
        segment += 1;
    }
    Ok(data)
}

/// Per-component bound on `|B·a(x, u)|` over the region with the noise at its
/// bound: maximum over the region's corners and 4096 seeded interior points.
pub fn worst_case_box(scenario: &Scenario, plant: &PlantModel, seed: u64) -> Vec<f64> {
    let region = &scenario.plan.region;
    let mut points: Vec<Vec<f64>> = (0..1u32 << 6)
        .map(|mask| (0..6).map(|i| if mask >> i & 1 == 1 { region.hi[i] } else { region.lo[i] }).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xB0B, 0));
    points.extend((0..4096).map(|_| (0..6).map(|i| rng.gen_range(region.lo[i]..=region.hi[i])).collect()));
    let b = plant.b();
    let nb = scenario.physics.noise_bound();
    let mut out: Vec<f64> = (0..4).map(|i| nb * (b[(i, 0)].abs() + b[(i, 1)].abs())).collect();
    let det_max = points
        .iter()
        .map(|xv| {
            let z = xv_to_z(plant.k(), xv);
            let a = accel_disturbance(&scenario.physics, &z[..4], &z[4..], [0.0, 0.0]);
            (0..4).map(|i| (b[(i, 0)] * a[0] + b[(i, 1)] * a[1]).abs()).collect::<Vec<f64>>()
        })
        .fold(vec![0.0_f64; 4], |acc, w| acc.iter().zip(&w).map(|(a, b)| a.max(*b)).collect());
    for (o, d) in out.iter_mut().zip(det_max) {
        *o += d;
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_half_width(p: &SupportPolytope) -> f64 {
    let d = p.directions();
    let n = p.dims();
    (0..n).map(|i| 0.5 * (p.value(d.axis_index(i, true)) + p.value(d.axis_index(i, false)))).sum::<f64>() / n as f64
}

/// The epoch loop: grow data, fit, wrap (nested in the previous wrapper),
/// lift, iterate to the fixed point from the previous tube when it is a
/// valid seed, and record metrics.
pub fn run_epochs(scenario: &Scenario, seed: u64) -> Result<EpochRun, PlantError> {
    let built = scenario.build()?;
    let plant = &built.plant;
    let sys = LiftedSystem::lift(plant);
    let opts = scenario.fp_options();
    let x_dirs = plant.x_set().directions().clone();
    let xv_dirs = DirectionSet::axes(6);

    let w_box = worst_case_box(scenario, plant, seed);
    let box_wrapper = DisturbanceWrapper::constant(
        &SupportPolytope::from_box(built.w_dirs.clone(), &w_box.iter().map(|v| -v).collect::<Vec<_>>(), &w_box)?,
        plant.k().clone(),
    )?;
    let box_graph = GraphSet::new(plant, &box_wrapper)?;
    // Graph normals depend only on the direction sets, so one lifted set
    // serves the baseline and every epoch.
    let chains = sys.state_chains(&plant.a_cl(), plant.b(), &sys.state_axis_seeds(), scenario.directions.chain_depth);
    let dirs = box_graph.lifted_directions(
        &chains,
        scenario.directions.lifted_random,
        scenario.directions.seed.wrapping_add(3),
    )?;
    let box_op = Operator::new(&sys, &box_graph, plant.dv_set(), &box_wrapper, dirs.clone())?;
    let box_res = fixed_point(&box_op, &seed_z0(&box_op)?, &opts, &x_dirs, &xv_dirs)?;
    let baseline = BoxBaseline {
        w_box,
        mean_support: mean(box_res.proj_x.values()),
        proj_x: box_res.proj_x,
        iterations: box_res.iterations,
    };

    let mut run = EpochRun { baseline, records: Vec::new(), error: None };
    let mut data = Dataset::new(6, 4);
    for q in 0..scenario.plan.epochs {
        match run_epoch(scenario, &built, &sys, &dirs, &xv_dirs, &mut data, &run, q, seed) {
            Ok(rec) => run.records.push(rec),
            Err(e) => {
                run.error = Some(e);
                break;
            }
        }
    }
    Ok(run)
}

#[allow(clippy::too_many_arguments)]
fn run_epoch(
    scenario: &Scenario,
    built: &Built,
    sys: &LiftedSystem,
    dirs: &Arc<DirectionSet>,
    xv_dirs: &Arc<DirectionSet>,
    data: &mut Dataset,
    run: &EpochRun,
    q: usize,
    seed: u64,
) -> Result<EpochRecord, PlantError> {
    let plant = &built.plant;
    let plan = &scenario.plan;
    let t0 = data.len() as f64 * scenario.physics.dt;
    data.extend(&collect_excitation(scenario, plant, q, plan.new_points_per_epoch, t0, seed)?)?;
    let model = GpModel::fit(data, &scenario.kernels, plan.sigma_min2)?;
    let lips = estimate_lipschitz(
        &model,
        &built.region,
        plant.k(),
        &built.w_dirs,
        plan.lipschitz_density,
        plan.lipschitz_safety,
    )?;
    let mut wrapper = build_wrapper(&model, &built.region, plant.k(), &built.w_dirs, &scenario.wrapper_settings(), lips)?;
    let prev = run.records.last();
    if let Some(p) = prev {
        wrapper.nest_within(&p.wrapper)?;
    }
    let graph = GraphSet::new(plant, &wrapper)?;
    let op = Operator::new(sys, &graph, plant.dv_set(), &wrapper, dirs.clone())?;
    let warm = prev.and_then(|p| verify_seed(&op, &p.result.z_star).ok().map(|_| p.result.z_star.clone()));
    let warm_started = warm.is_some();
    let mut seed_kind = SeedKind::Warm;
    let z0 = match warm {
        Some(z) => z,
        None => match bootstrap_seed(&op, plant, &bootstrap_boxes(&built.region, &plan.bootstrap), &scenario.fp_options())? {
            Some((z, idx)) => {
                seed_kind = SeedKind::Bootstrap(plan.bootstrap[idx]);
                z
            }
            None => {
                seed_kind = SeedKind::Graph;
                seed_z0(&op)?
            }
        },
    };
    let result = fixed_point(&op, &z0, &scenario.fp_options(), plant.x_set().directions(), xv_dirs)?;
    if !result.is_state_invariant(plan.tol) {
        return Err(PlantError::ConstraintActive { epoch: q, excess: result.state_excess });
    }
    let (lo, hi) = result.proj_xv.bounding_box();
    if !built.region.contains_box(&lo, &hi, 1e-9) {
        let r = &built.region;
        let excess = (0..lo.len()).map(|i| (r.lo[i] - lo[i]).max(hi[i] - r.hi[i])).fold(0.0, f64::max);
        return Err(PlantError::TubeOutsideRegion { epoch: q, excess });
    }
    let grid = wrapper.grid().expect("learned wrapper has a grid");
    let mean_support = mean(result.proj_x.values());
    let hausdorff_to_prev = match prev {
        Some(p) => Some(hausdorff_gap(&p.result.z_star, &result.z_star).map_err(LiftedError::from)?),
        None => None,
    };
    let metrics = EpochMetrics {
        n_data: data.len(),
        iterations: result.iterations,
        final_gap: result.final_gap(),
        warm_started,
        seed: seed_kind,
        facets: result.z_star.len(),
        anchors: grid.len(),
        radius: grid.eps(),
        alpha_uniform: grid.alpha_uniform(),
        mean_support,
        mean_half_width: mean_half_width(&result.proj_x),
        conservatism_ratio: mean_support / run.baseline.mean_support,
        hausdorff_to_prev,
        state_excess: result.state_excess,
    };
    Ok(EpochRecord { q, dataset: data.clone(), wrapper, result, metrics })
}
