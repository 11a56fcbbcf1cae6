mod common;

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shrinktube::geom::{contains, DirectionSet, SupportPolytope};
use shrinktube::gp::{Dataset, GpModel, KernelParams, SIGMA_MIN2};
use shrinktube::lifted::{
    fixed_point, seed_z0, tighten_constraints, w_of_z, FixedPointOptions, FixedPointResult, GraphSet, LiftedError,
    LiftedSystem, Operator, PlantModel, SelectorPolicy,
};
use shrinktube::wrapper::{build_wrapper, estimate_lipschitz, DisturbanceWrapper, RegionBox, WrapperSettings};

fn mat(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v)
}

fn boxed(dirs: &Arc<DirectionSet>, lo: &[f64], hi: &[f64]) -> SupportPolytope {
    SupportPolytope::from_box(dirs.clone(), lo, hi).unwrap()
}

struct Case {
    plant: PlantModel,
    sys: LiftedSystem,
    wrapper: DisturbanceWrapper,
    graph: GraphSet,
    dirs: Arc<DirectionSet>,
    xv_dirs: Arc<DirectionSet>,
}

impl Case {
    fn new(plant: PlantModel, wrapper: DisturbanceWrapper, n_f: usize, seed: u64) -> Self {
        let sys = LiftedSystem::lift(&plant);
        let graph = GraphSet::new(&plant, &wrapper).unwrap();
        let dirs = graph.lifted_directions(&[], n_f, seed).unwrap();
        let xv_dirs = DirectionSet::axes(sys.n + sys.m);
        Self { plant, sys, wrapper, graph, dirs, xv_dirs }
    }

    fn op(&self) -> Operator<'_> {
        Operator::new(&self.sys, &self.graph, self.plant.dv_set(), &self.wrapper, self.dirs.clone()).unwrap()
    }

    fn solve(&self, opts: &FixedPointOptions) -> Result<FixedPointResult, LiftedError> {
        let op = self.op();
        let z0 = seed_z0(&op)?;
        fixed_point(&op, &z0, opts, self.plant.x_set().directions(), &self.xv_dirs)
    }
}

/// `x⁺ = 0.5x + w`, `w ∈ [−1, 1]`, inside `[−10, 10]`.
fn scalar_case() -> Case {
    let d1 = DirectionSet::axes(1);
    let plant = PlantModel::new(
        mat(1, 1, &[0.5]),
        mat(1, 1, &[0.0]),
        mat(1, 1, &[0.0]),
        boxed(&d1, &[-10.0], &[10.0]),
        boxed(&d1, &[-1.0], &[1.0]),
        boxed(&d1, &[0.0], &[0.0]),
    )
    .unwrap();
    let w = DisturbanceWrapper::constant(&boxed(&d1, &[-1.0], &[1.0]), mat(1, 1, &[0.0])).unwrap();
    Case::new(plant, w, 12, 1)
}

#[test]
fn lift_block_pattern() {
    let d1 = DirectionSet::axes(1);
    let plant = PlantModel::new(
        mat(1, 1, &[1.0]),
        mat(1, 1, &[1.0]),
        mat(1, 1, &[-0.5]),
        boxed(&d1, &[-1.0], &[1.0]),
        boxed(&d1, &[-1.0], &[1.0]),
        boxed(&d1, &[-0.1], &[0.1]),
    )
    .unwrap();
    let sys = LiftedSystem::lift(&plant);
    assert_eq!(sys.at, mat(3, 3, &[0.5, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]));
    assert_eq!(sys.bt, mat(3, 1, &[1.0, 1.0, 0.0]));
    assert_eq!(sys.dt, mat(3, 1, &[1.0, 0.0, 1.0]));
    assert_eq!(LiftedSystem::lift(&plant), sys);
    assert_eq!(plant.dv_set().values(), &[0.2, 0.2]);
}

#[test]
fn lifted_eigenvalues_are_the_block_union() {
    let dx = DirectionSet::axes(2);
    let du = DirectionSet::axes(1);
    let a = mat(2, 2, &[1.0, 0.1, 0.0, 1.0]);
    let b = mat(2, 1, &[0.005, 0.1]);
    let k = mat(1, 2, &[-2.0, -2.5]);
    let plant = PlantModel::new(
        a,
        b,
        k,
        boxed(&dx, &[-1.0, -1.0], &[1.0, 1.0]),
        boxed(&du, &[-1.0], &[1.0]),
        boxed(&du, &[-0.1], &[0.1]),
    )
    .unwrap();
    let sys = LiftedSystem::lift(&plant);
    let w = mat(2, 1, &[0.3, -0.7]);
    let dw = &sys.dt * &w;
    assert_eq!(dw.as_slice(), &[0.3, -0.7, 0.0, 0.3, -0.7]);

    let mut got: Vec<(f64, f64)> = sys.at.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    let mut want: Vec<(f64, f64)> = plant.a_cl().complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    want.extend([(1.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
    let key = |p: &(f64, f64)| (p.0 * 1e6).round() as i64 * 1_000_000_000 + (p.1 * 1e6).round() as i64;
    got.sort_by_key(key);
    want.sort_by_key(key);
    for (g, w) in got.iter().zip(&want) {
        assert!((g.0 - w.0).abs() < 1e-9 && (g.1 - w.1).abs() < 1e-9, "{got:?} vs {want:?}");
    }
}

#[test]
fn unstable_gain_is_rejected() {
    let d1 = DirectionSet::axes(1);
    let err = PlantModel::new(
        mat(1, 1, &[1.2]),
        mat(1, 1, &[1.0]),
        mat(1, 1, &[0.0]),
        boxed(&d1, &[-1.0], &[1.0]),
        boxed(&d1, &[-1.0], &[1.0]),
        boxed(&d1, &[0.0], &[0.0]),
    );
    assert!(matches!(err, Err(LiftedError::NotSchur(r)) if (r - 1.2).abs() < 1e-12));
}

#[test]
fn scalar_geometric_series() {
    let case = scalar_case();
    let res = case.solve(&FixedPointOptions::default()).unwrap();
    assert!((res.proj_x.value(0) - 2.0).abs() < 1e-6);
    assert!((res.proj_x.value(1) - 2.0).abs() < 1e-6);
    for pair in res.gaps.windows(2) {
        assert!(pair[1] < pair[0], "{:?}", res.gaps);
    }
    for pair in res.gaps_to_limit.windows(2) {
        assert!(pair[1] <= pair[0]);
    }
    assert!(*res.gaps.last().unwrap() < 1e-6);
}

#[test]
fn diagonal_plant_matches_componentwise_series() {
    let dx = DirectionSet::generate(2, 8, 5).unwrap();
    let d1 = DirectionSet::axes(1);
    let plant = PlantModel::new(
        mat(2, 2, &[0.5, 0.0, 0.0, 0.8]),
        mat(2, 1, &[0.0, 0.0]),
        mat(1, 2, &[0.0, 0.0]),
        boxed(&dx, &[-20.0, -20.0], &[20.0, 20.0]),
        boxed(&d1, &[-1.0], &[1.0]),
        boxed(&d1, &[0.0], &[0.0]),
    )
    .unwrap();
    let dw = DirectionSet::generate(2, 8, 6).unwrap();
    let w = DisturbanceWrapper::constant(&boxed(&dw, &[-1.0, -1.0], &[1.0, 1.0]), mat(1, 2, &[0.0, 0.0])).unwrap();
    let case = Case::new(plant, w, 40, 2);
    let res = case.solve(&FixedPointOptions::default()).unwrap();
    for (s, h) in dx.iter().zip(res.proj_x.values()) {
        let want = 2.0 * s[0].abs() + 5.0 * s[1].abs();
        assert!((h - want).abs() < 1e-3, "{s:?}: {h} vs {want}");
    }
}

#[test]
fn nominal_contraction_and_trivial_fixed_point() {
    let dx = DirectionSet::axes(2);
    let d1 = DirectionSet::axes(1);
    let plant = PlantModel::new(
        mat(2, 2, &[0.6, 0.1, 0.0, 0.7]),
        mat(2, 1, &[0.0, 1.0]),
        mat(1, 2, &[0.0, 0.0]),
        boxed(&dx, &[-5.0, -5.0], &[5.0, 5.0]),
        boxed(&d1, &[-1.0], &[1.0]),
        boxed(&d1, &[0.0], &[0.0]),
    )
    .unwrap();
    let w = DisturbanceWrapper::constant(&boxed(&dx, &[0.0, 0.0], &[0.0, 0.0]), mat(1, 2, &[0.0, 0.0])).unwrap();
    let case = Case::new(plant, w, 20, 3);
    let op = case.op();
    let z = boxed(&case.dirs, &[-0.5, -0.5, 0.0, 0.0, 0.0], &[0.5, 0.5, 0.0, 0.0, 0.0]);
    let f = op.apply(&z).unwrap();
    assert!(contains(&z, &f, 1e-12));
    let ax = |p: &SupportPolytope, i: usize| p.value(case.dirs.axis_index(i, true));
    assert!(ax(&f, 0) <= 0.7 * ax(&z, 0) + 1e-12);

    let origin = boxed(&case.dirs, &[0.0; 5], &[0.0; 5]);
    let res = fixed_point(&op, &origin, &FixedPointOptions::default(), case.plant.x_set().directions(), &case.xv_dirs)
        .unwrap();
    assert_eq!(res.iterations, 1);
    assert_eq!(res.gaps, vec![0.0]);

    // With no disturbance and V = {0} the tube collapses to the origin.
    let res = case.solve(&FixedPointOptions::default()).unwrap();
    assert!(res.proj_x.values().iter().all(|h| h.abs() < 1e-5));
}

#[test]
fn nominal_seed_is_x_times_zero() {
    let dx = DirectionSet::axes(2);
    let d1 = DirectionSet::axes(1);
    let plant = PlantModel::new(
        mat(2, 2, &[0.9, 0.2, -0.1, 0.6]),
        mat(2, 1, &[0.0, 1.0]),
        mat(1, 2, &[0.0, 0.0]),
        boxed(&dx, &[-50.0, -50.0], &[50.0, 50.0]),
        boxed(&d1, &[-1.0], &[1.0]),
        boxed(&d1, &[0.0], &[0.0]),
    )
    .unwrap();
    let w = DisturbanceWrapper::constant(&boxed(&dx, &[0.0, 0.0], &[0.0, 0.0]), mat(1, 2, &[0.0, 0.0])).unwrap();
    let case = Case::new(plant, w, 0, 0);
    let z0 = seed_z0(&case.op()).unwrap();
    assert_eq!(z0.values(), &[50.0, 50.0, 50.0, 50.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
}

/// Two states, one input, disturbance learned from
/// `w = (0.02·sin(x₁) + 0.01·u, −0.05·x₂·|x₂| + 0.02·u)`.
fn learned_case(points: usize, eps: f64, n_f: usize) -> (Case, GpModel) {
    let dx = DirectionSet::generate(2, 12, 11).unwrap();
    let d1 = DirectionSet::axes(1);
    let k = mat(1, 2, &[-2.0, -2.5]);
    let plant = PlantModel::new(
        mat(2, 2, &[1.0, 0.2, 0.0, 1.0]),
        mat(2, 1, &[0.02, 0.2]),
        k.clone(),
        boxed(&dx, &[-3.0, -3.0], &[3.0, 3.0]),
        boxed(&d1, &[-6.0], &[6.0]),
        boxed(&d1, &[-0.05], &[0.05]),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut data = Dataset::new(3, 2);
    for _ in 0..points {
        let x: [f64; 2] = [rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)];
        let u: f64 = k[(0, 0)] * x[0] + k[(0, 1)] * x[1] + rng.gen_range(-0.1..0.1);
        let w = [0.02 * x[0].sin() + 0.01 * u, -0.05 * x[1] * x[1].abs() + 0.02 * u];
        data.push(&[x[0], x[1], u], 0.0, &w).unwrap();
    }
    let params = [KernelParams::squared_exponential(4e-4, 1.0, 1e-6), KernelParams::squared_exponential(4e-3, 1.0, 1e-6)];
    let model = GpModel::fit(&data, &params, SIGMA_MIN2).unwrap();
    let region = RegionBox::new(vec![-1.0, -1.0, -0.05], vec![1.0, 1.0, 0.05]).unwrap();
    let dw = DirectionSet::generate(2, 8, 12).unwrap();
    let lips = estimate_lipschitz(&model, &region, &k, &dw, 9, 1.5).unwrap();
    let settings = WrapperSettings { eps, alpha_epoch: 0.05, max_anchors: 10_000 };
    let wrapper = build_wrapper(&model, &region, &k, &dw, &settings, lips).unwrap();
    (Case::new(plant, wrapper, n_f, 13), model)
}

#[test]
fn operator_is_monotone_on_nested_pairs() {
    let (case, _) = learned_case(80, 0.3, 30);
    let op = case.op();
    let g = seed_z0(&op).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        // A point of G, then two nested sets around it.
        let centre: Vec<f64> = (0..5).map(|i| {
            let (lo, hi) = (-g.value(case.dirs.axis_index(i, false)), g.value(case.dirs.axis_index(i, true)));
            lo + rng.gen_range(0.3..0.7) * (hi - lo)
        }).collect();
        if !case.graph.contains_point(&centre, 0.0) {
            continue;
        }
        let hc: Vec<f64> = case.dirs.iter().map(|s| s.iter().zip(&centre).map(|(a, b)| a * b).sum()).collect();
        let l2: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(0.2..1.0)).collect();
        let l1: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let z2 = g.map_values(|i, h| hc[i] + l2[i] * (h - hc[i])).unwrap();
        let z1 = z2.map_values(|i, h| hc[i] + l1[i] * (h - hc[i])).unwrap();
        let (f1, f2) = (op.apply(&z1).unwrap(), op.apply(&z2).unwrap());
        assert!(contains(&f2, &f1, 1e-9));
        let (w1, w2) = (w_of_z(&z1, &case.wrapper, &case.sys).unwrap(), w_of_z(&z2, &case.wrapper, &case.sys).unwrap());
        assert!(contains(&w2, &w1, 0.0));
        assert!(contains(&case.wrapper.envelope_polytope(), &w2, 0.0));
    }
}

#[test]
fn w_of_z_singleton_and_full_region() {
    let (case, _) = learned_case(60, 0.3, 30);
    let grid = case.wrapper.grid().unwrap();
    let a = grid.anchor(4);
    let pt = boxed(&case.dirs, &[a[0], a[1], a[2], 0.0, 0.0], &[a[0], a[1], a[2], 0.0, 0.0]);
    assert_eq!(w_of_z(&pt, &case.wrapper, &case.sys).unwrap().values(), case.wrapper.anchor_supports(4));
    let r = grid.region();
    let full = boxed(&case.dirs, &[r.lo[0], r.lo[1], r.lo[2], 0.0, 0.0], &[r.hi[0], r.hi[1], r.hi[2], 0.0, 0.0]);
    let w = w_of_z(&full, &case.wrapper, &case.sys).unwrap();
    for (a, b) in w.values().iter().zip(case.wrapper.envelope()) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn graph_contains(case: &Case, z: &SupportPolytope, tol: f64) -> bool {
    let hs = case.graph.halfspaces();
    let rows: Vec<Vec<f64>> = (0..hs.len()).map(|j| hs.normal(j).to_vec()).collect();
    let sup = z.support_batch(&rows).unwrap();
    sup.iter().zip(hs.offsets()).all(|(s, b)| *s <= b + tol)
}

#[test]
fn learned_fixed_point_properties() {
    let (case, model) = learned_case(120, 0.3, 40);
    let opts = FixedPointOptions::default();
    let res = case.solve(&opts).unwrap();
    assert!(res.final_gap() < opts.tol);
    assert!(res.is_state_invariant(1e-9), "{}", res.state_excess);
    let f = case.op().apply(&res.z_star).unwrap();
    assert!(contains(&res.z_star, &f, 2.0 * opts.tol));
    assert!(graph_contains(&case, &res.z_star, 1e-9));
    for pair in res.gaps_to_limit.windows(2) {
        assert!(pair[1] <= pair[0]);
    }
    assert!(contains(case.plant.x_set(), &res.proj_x, 0.0));

    let back = FixedPointResult::from_json(&res.to_json()).unwrap();
    assert_eq!(back.z_star.values(), res.z_star.values());
    assert_eq!(back.gaps, res.gaps);

    // One-step invariance through the selector, against every vertex of the
    // local disturbance polytope.
    let policy = SelectorPolicy::new(&res, 2, 1).unwrap();
    let a_cl = case.plant.a_cl();
    let b = case.plant.b();
    let wd = case.wrapper.directions();
    let wrows: Vec<Vec<f64>> = wd.iter().map(|s| s.to_vec()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (lo, hi) = res.proj_x.bounding_box();
    let mut tested = 0;
    while tested < 1000 {
        let x = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
        if !policy.in_tube(&x, 0.0).unwrap() {
            continue;
        }
        tested += 1;
        let v = policy.select(&x).unwrap();
        assert!(policy.in_slice(&x, &v).unwrap());
        assert!(v[0].abs() <= 0.05 + 1e-9);
        let local = case.wrapper.query_supports(&[x[0], x[1], v[0]]);
        let nominal = [
            a_cl[(0, 0)] * x[0] + a_cl[(0, 1)] * x[1] + b[(0, 0)] * v[0],
            a_cl[(1, 0)] * x[0] + a_cl[(1, 1)] * x[1] + b[(1, 0)] * v[0],
        ];
        for wv in common::vertices(2, &wrows, &local) {
            let next = [nominal[0] + wv[0], nominal[1] + wv[1]];
            assert!(res.proj_x.contains_point(&next, 1e-5), "{x:?} -> {next:?}");
            assert!(policy.in_tube(&next, 1e-5).unwrap(), "{x:?} -> {next:?}");
        }
    }
    let _ = model;
}

#[test]
fn selector_symmetric_and_singleton_slices() {
    let case = scalar_case();
    let res = case.solve(&FixedPointOptions::default()).unwrap();
    let policy = SelectorPolicy::new(&res, 1, 1).unwrap();
    assert_eq!(policy.select(&[0.3]).unwrap().len(), 1);
    assert!(policy.select(&[0.3]).unwrap()[0].abs() < 1e-9);
    assert!(matches!(policy.select(&[2.5]), Err(LiftedError::OutOfTube { .. })));

    // V = {0.25}: every slice is that point.
    let d1 = DirectionSet::axes(1);
    let plant = PlantModel::new(
        mat(1, 1, &[0.5]),
        mat(1, 1, &[0.0]),
        mat(1, 1, &[0.0]),
        boxed(&d1, &[-10.0], &[10.0]),
        boxed(&d1, &[-1.0], &[1.0]),
        boxed(&d1, &[0.25], &[0.25]),
    )
    .unwrap();
    let w = DisturbanceWrapper::constant(&boxed(&d1, &[-1.0], &[1.0]), mat(1, 1, &[0.0])).unwrap();
    let case = Case::new(plant, w, 12, 1);
    let res = case.solve(&FixedPointOptions::default()).unwrap();
    let policy = SelectorPolicy::new(&res, 1, 1).unwrap();
    assert!((policy.select(&[-1.0]).unwrap()[0] - 0.25).abs() < 1e-9);
}

#[test]
fn warm_start_needs_fewer_iterations() {
    let (case, _) = learned_case(120, 0.3, 40);
    let opts = FixedPointOptions::default();
    let prev = case.solve(&opts).unwrap();
    // A strictly smaller disturbance set at every (x, v).
    let dw = case.wrapper.directions().clone();
    let shrunk = DisturbanceWrapper::constant(
        &SupportPolytope::new(dw.clone(), case.wrapper.envelope().iter().map(|h| 0.5 * h).collect()).unwrap(),
        case.plant.k().clone(),
    )
    .unwrap();
    let smaller = Case::new(case.plant.clone(), shrunk, 40, 13);
    let op = smaller.op();
    let cold = smaller.solve(&opts).unwrap();
    let warm = fixed_point(&op, &prev.z_star, &opts, smaller.plant.x_set().directions(), &smaller.xv_dirs).unwrap();
    assert!(warm.iterations < cold.iterations, "{} vs {}", warm.iterations, cold.iterations);
    for (a, b) in warm.z_star.values().iter().zip(cold.z_star.values()) {
        assert!((a - b).abs() < 1e-4);
    }
}

#[test]
fn shrinking_the_wrapper_shrinks_the_fixed_point() {
    let d1 = DirectionSet::axes(1);
    let dx = DirectionSet::generate(2, 10, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let plant = PlantModel::new(
            mat(2, 2, &[0.7, 0.2, -0.1, 0.8]),
            mat(2, 1, &[0.0, 0.5]),
            mat(1, 2, &[0.0, 0.0]),
            boxed(&dx, &[-30.0, -30.0], &[30.0, 30.0]),
            boxed(&d1, &[-1.0], &[1.0]),
            boxed(&d1, &[-0.1], &[0.1]),
        )
        .unwrap();
        let big = boxed(&dx, &[-1.0, -0.5], &[1.0, 0.7]);
        let f: Vec<f64> = (0..big.len()).map(|_| rng.gen_range(0.3..1.0)).collect();
        let small = big.map_values(|i, h| h * f[i]).unwrap();
        let k = mat(1, 2, &[0.0, 0.0]);
        let a = Case::new(plant.clone(), DisturbanceWrapper::constant(&big, k.clone()).unwrap(), 25, 9);
        let b = Case::new(plant, DisturbanceWrapper::constant(&small, k).unwrap(), 25, 9);
        let opts = FixedPointOptions::default();
        let (ra, rb) = (a.solve(&opts).unwrap(), b.solve(&opts).unwrap());
        assert!(contains(&ra.z_star, &rb.z_star, 1e-9));
        assert!(contains(&ra.proj_x, &rb.proj_x, 1e-9));
    }
}

#[test]
fn non_convergence_is_reported() {
    let case = scalar_case();
    let op = case.op();
    let z0 = seed_z0(&op).unwrap();
    let opts = FixedPointOptions { tol: 1e-6, max_iter: 3 };
    let err = fixed_point(&op, &z0, &opts, case.plant.x_set().directions(), &case.xv_dirs).unwrap_err();
    assert!(matches!(err, LiftedError::NotConverged { iterations: 3, .. }));
}

#[test]
fn tightening_examples() {
    let d1 = DirectionSet::axes(1);
    let plant = PlantModel::new(
        mat(1, 1, &[0.5]),
        mat(1, 1, &[1.0]),
        mat(1, 1, &[0.0]),
        boxed(&d1, &[-5.0], &[5.0]),
        boxed(&d1, &[-1.0], &[1.0]),
        boxed(&d1, &[0.0], &[0.0]),
    )
    .unwrap();
    let zero = boxed(&d1, &[0.0], &[0.0]);
    assert_eq!(tighten_constraints(&plant, &zero).unwrap().values(), plant.x_set().values());
    let tube = boxed(&d1, &[-2.0], &[2.0]);
    let t = tighten_constraints(&plant, &tube).unwrap();
    assert_eq!(t.values(), &[3.0, 3.0]);
    let resum = shrinktube::geom::minkowski_sum(&t, &tube).unwrap();
    assert!(contains(plant.x_set(), &resum, 1e-12));
}
