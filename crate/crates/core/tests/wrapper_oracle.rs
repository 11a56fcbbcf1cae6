use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shrinktube::geom::DirectionSet;
use shrinktube::gp::{Dataset, GpModel, KernelParams, SIGMA_MIN2};
use shrinktube::wrapper::{
    build_wrapper, chi2_quantile, ellipsoid_at, estimate_lipschitz, posterior_supports, xv_to_z, AnchorGrid,
    CredibleEllipsoid, DisturbanceWrapper, LipschitzBounds, RegionBox, WrapperSettings,
};

// Chi-square CDFs written independently of the library's incomplete gamma.
fn cdf_one_dof(x: f64) -> f64 {
    statrs::function::erf::erf((x / 2.0).sqrt())
}

fn cdf_even_dof(n: usize, x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..n / 2 {
        term *= half / k as f64;
        sum += term;
    }
    1.0 - (-half).exp() * sum
}

fn bisect(cdf: impl Fn(f64) -> f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 200.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn chi2_quantiles_against_independent_cdfs() {
    for alpha in [0.1, 0.05, 0.01] {
        assert!((chi2_quantile(2, 1.0 - alpha).unwrap() + 2.0 * alpha.ln()).abs() < 1e-8);
    }
    assert!((chi2_quantile(1, 0.6827).unwrap() - 1.0).abs() < 1e-3);
    for p in [0.3, 0.6827, 0.9, 0.95, 0.99, 0.9999] {
        assert!((chi2_quantile(1, p).unwrap() - bisect(cdf_one_dof, p)).abs() < 1e-6);
        for n in [4, 10] {
            let want = bisect(|x| cdf_even_dof(n, x), p);
            assert!((chi2_quantile(n, p).unwrap() - want).abs() < 1e-6, "n={n} p={p}");
        }
    }
    // odd n > 1: tabulated 0.975 quantile for 7 degrees of freedom
    assert!((chi2_quantile(7, 0.975).unwrap() - 16.012_764_274_629_326).abs() < 1e-8);
}

#[test]
fn ellipsoid_support_examples() {
    let e = CredibleEllipsoid::new(vec![0.0, 0.0], vec![1.0, 1.0], 1.0).unwrap();
    assert_eq!(e.support(&[1.0, 0.0]), 1.0);
    let e = CredibleEllipsoid::new(vec![1.0, 0.0], vec![4.0, 1.0], 1.0).unwrap();
    assert_eq!(e.support(&[1.0, 0.0]), 3.0);
}

fn boundary_samples(e: &CredibleEllipsoid, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let r = e.chi2.sqrt();
    (0..count)
        .map(|_| {
            let u: Vec<f64> = (0..e.dims()).map(|_| rng.sample(StandardNormal)).collect();
            let norm = u.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
            (0..e.dims()).map(|i| e.mu[i] + r * e.sigma_diag[i].sqrt() * u[i] / norm).collect()
        })
        .collect()
}

#[test]
fn ellipsoid_support_dominates_and_is_attained_by_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let e = CredibleEllipsoid::new(vec![0.3, -0.2, 1.0], vec![0.5, 2.0, 0.1], 7.8).unwrap();
    let pts = boundary_samples(&e, 100_000, &mut rng);
    for _ in 0..20 {
        let s: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let n = s.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        let s: Vec<f64> = s.iter().map(|x| x / n).collect();
        let h = e.support(&s);
        let best = pts.iter().map(|p| p.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>()).fold(f64::MIN, f64::max);
        assert!(best <= h + 1e-12);
        assert!(best >= h - 0.05 * h.abs().max(1.0));
    }
}

#[test]
fn polytopize_examples() {
    let axes = DirectionSet::axes(2);
    let ball = CredibleEllipsoid::new(vec![0.0, 0.0], vec![1.0, 1.0], 1.0).unwrap();
    assert_eq!(ball.polytopize(&axes).unwrap().values(), &[1.0, 1.0, 1.0, 1.0]);

    let dirs = DirectionSet::generate(2, 12, 3).unwrap();
    let e = CredibleEllipsoid::new(vec![0.5, -1.0], vec![0.8, 0.3], 5.0).unwrap();
    let small = CredibleEllipsoid::new(e.mu.clone(), e.sigma_diag.iter().map(|s| s / 4.0).collect(), 5.0).unwrap();
    let (p, q) = (e.polytopize(&dirs).unwrap(), small.polytopize(&dirs).unwrap());
    for (i, s) in dirs.iter().enumerate() {
        let centre: f64 = s.iter().zip(&e.mu).map(|(a, b)| a * b).sum();
        assert!(((q.value(i) - centre) - 0.5 * (p.value(i) - centre)).abs() < 1e-12);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for pt in boundary_samples(&e, 100_000, &mut rng) {
        assert!(p.contains_point(&pt, 1e-12));
    }
}

#[test]
fn ellipsoid_at_prior_and_level_limit() {
    let params = [KernelParams::squared_exponential(0.4, 1.0, 0.01); 2];
    let model = GpModel::fit(&Dataset::new(3, 2), &params, SIGMA_MIN2).unwrap();
    let e = ellipsoid_at(&model, &[0.0, 1.0, 2.0], 0.0, 0.05).unwrap();
    assert!(e.sigma_diag.iter().all(|s| (s - 0.41).abs() < 1e-12));
    let tight = ellipsoid_at(&model, &[0.0, 1.0, 2.0], 0.0, 1.0 - 1e-9).unwrap();
    assert!(tight.chi2 < 1e-6 && tight.chi2 > 0.0);
}

/// Scalar state, scalar input: w(x, u) = 0.3·sin(2x) − 0.1·u + noise.
fn scalar_model(points: usize, seed: u64) -> GpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Dataset::new(2, 1);
    for _ in 0..points {
        let x: f64 = rng.gen_range(-1.2..1.2);
        let u = rng.gen_range(-1.5..1.5);
        let w = 0.3 * (2.0 * x).sin() - 0.1 * u + 0.01 * rng.sample::<f64, _>(StandardNormal);
        d.push(&[x, u], 0.0, &[w]).unwrap();
    }
    GpModel::fit(&d, &[KernelParams::squared_exponential(0.1, 0.6, 1e-4)], SIGMA_MIN2).unwrap()
}

fn scalar_setup() -> (GpModel, RegionBox, DMatrix<f64>, Arc<DirectionSet>) {
    let region = RegionBox::new(vec![-1.0, -0.3], vec![1.0, 0.3]).unwrap();
    (scalar_model(60, 1), region, DMatrix::from_element(1, 1, -0.6), DirectionSet::axes(1))
}

#[test]
fn lipschitz_examples() {
    let (model, region, gain, dirs) = scalar_setup();
    let prior = GpModel::fit(&Dataset::new(2, 1), &[KernelParams::squared_exponential(0.1, 0.6, 1e-4)], SIGMA_MIN2)
        .unwrap();
    let flat = estimate_lipschitz(&prior, &region, &gain, &dirs, 5, 1.5).unwrap();
    assert_eq!(flat.l_mu, 0.0);
    assert!(flat.l_sigma.iter().all(|l| *l == 0.0));

    let a = estimate_lipschitz(&model, &region, &gain, &dirs, 9, 1.0).unwrap();
    let b = estimate_lipschitz(&model, &region, &gain, &dirs, 9, 2.0).unwrap();
    assert!((b.l_mu - 2.0 * a.l_mu).abs() < 1e-15);
    for (x, y) in a.l_sigma.iter().zip(&b.l_sigma) {
        assert!((y - 2.0 * x).abs() < 1e-15);
    }

    let degenerate = RegionBox::new(vec![0.5, 0.0], vec![0.5, 0.0]).unwrap();
    assert!(estimate_lipschitz(&model, &degenerate, &gain, &dirs, 5, 1.5).is_err());
}

#[test]
fn lipschitz_against_analytic_rbf_derivative() {
    // One training input axis: z = (x, u) with u held at 0 by K = 0 and a
    // zero-width v-axis, so the mean is a 1D RBF expansion.
    let ell = 0.5;
    let p = KernelParams::squared_exponential(1.0, ell, 1e-3);
    let mut d = Dataset::new(2, 1);
    for (x, w) in [(-1.0, 0.2), (-0.3, -0.5), (0.4, 0.9), (1.1, 0.1)] {
        d.push(&[x, 0.0], 0.0, &[w]).unwrap();
    }
    let model = GpModel::fit(&d, &[p], SIGMA_MIN2).unwrap();
    let alpha = model.components()[0].alpha().clone();
    let xs = [-1.0, -0.3, 0.4, 1.1];
    let deriv = |x: f64| -> f64 {
        xs.iter()
            .zip(alpha.iter())
            .map(|(xj, a)| a * (-(x - xj) / (ell * ell)) * (-(x - xj).powi(2) / (2.0 * ell * ell)).exp())
            .sum()
    };
    let region = RegionBox::new(vec![-1.5, 0.0], vec![1.5, 0.0]).unwrap();
    let density = 401;
    let true_sup = (0..density)
        .map(|i| deriv(-1.5 + 3.0 * i as f64 / (density - 1) as f64).abs())
        .fold(0.0, f64::max);
    let safety = 1.5;
    let est = estimate_lipschitz(&model, &region, &DMatrix::zeros(1, 1), &DirectionSet::axes(1), density, safety)
        .unwrap();
    assert!(est.l_mu >= true_sup, "{} < {true_sup}", est.l_mu);
    assert!(est.l_mu <= safety * 1.1 * true_sup);
}

fn scalar_wrapper(eps: f64) -> (GpModel, DisturbanceWrapper) {
    let (model, region, gain, dirs) = scalar_setup();
    let lips = estimate_lipschitz(&model, &region, &gain, &dirs, 41, 1.5).unwrap();
    let settings = WrapperSettings { eps, alpha_epoch: 0.05, max_anchors: 10_000 };
    let w = build_wrapper(&model, &region, &gain, &dirs, &settings, lips).unwrap();
    (model, w)
}

#[test]
fn single_anchor_envelope() {
    let (_, w) = scalar_wrapper(10.0);
    let grid = w.grid().unwrap();
    assert_eq!(grid.len(), 1);
    let l = w.lipschitz();
    for j in 0..2 {
        let want = w.anchor_supports(0)[j] + (l.l_mu + w.c() * l.l_sigma[j]) * grid.eps();
        assert_eq!(w.envelope()[j], want);
    }
    assert_eq!(grid.alpha_anc(), 0.05);
}

#[test]
fn zero_lipschitz_envelope_is_anchor_max() {
    let (model, region, gain, dirs) = scalar_setup();
    let settings = WrapperSettings { eps: 0.1, ..Default::default() };
    let w = build_wrapper(&model, &region, &gain, &dirs, &settings, LipschitzBounds::zero(2)).unwrap();
    let n = w.grid().unwrap().len();
    for j in 0..2 {
        let top = (0..n).map(|a| w.anchor_supports(a)[j]).fold(f64::MIN, f64::max);
        assert_eq!(w.envelope()[j], top);
    }
}

#[test]
fn anchor_queries_and_fallback() {
    let (model, w) = scalar_wrapper(0.1);
    let grid = w.grid().unwrap();
    let c = w.c();
    let expected_c = chi2_quantile(1, 1.0 - grid.alpha_anc()).unwrap().sqrt();
    assert_eq!(c, expected_c);
    for a in [0, 3, grid.len() - 1] {
        let z = grid.anchor(a);
        let q = w.query_supports(&z);
        assert_eq!(q, w.anchor_supports(a));
        let post = model.posterior(&xv_to_z(w.gain(), &z), 0.0);
        let live = posterior_supports(&post, c, w.directions());
        for (x, y) in q.iter().zip(&live) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    assert_eq!(w.query_supports(&[5.0, 0.0]), w.envelope());
    assert_eq!(w.query_support(&[0.0], &[2.0], 1), w.envelope()[1]);
}

#[test]
fn per_point_bound_dominates_live_posterior() {
    let (model, w) = scalar_wrapper(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let xv = [rng.gen_range(-1.0..1.0), rng.gen_range(-0.3..0.3)];
        let post = model.posterior(&xv_to_z(w.gain(), &xv), 0.0);
        let live = posterior_supports(&post, w.c(), w.directions());
        for (q, h) in w.query_supports(&xv).iter().zip(&live) {
            assert!(h <= q, "{h} > {q} at {xv:?}");
        }
    }
}

#[test]
fn envelope_dominates_dense_grid() {
    let (model, w) = scalar_wrapper(0.1);
    let pts: Vec<Vec<f64>> = (0..50)
        .flat_map(|i| (0..50).map(move |j| vec![-1.0 + 2.0 * i as f64 / 49.0, -0.3 + 0.6 * j as f64 / 49.0]))
        .collect();
    assert!(w.envelope_excess(&model, &pts) <= 1e-9);
}

#[test]
fn union_supports_bracketed_by_anchor_and_envelope() {
    let (_, w) = scalar_wrapper(0.1);
    let grid = w.grid().unwrap();
    let z = grid.anchor(7);
    assert_eq!(w.union_supports(&z, &z), w.anchor_supports(7));
    let all = w.union_supports(&grid.region().lo, &grid.region().hi);
    for (a, e) in all.iter().zip(w.envelope()) {
        assert!((a - e).abs() < 1e-12);
    }
    let small = w.union_supports(&[-0.2, -0.1], &[0.1, 0.1]);
    let big = w.union_supports(&[-0.5, -0.2], &[0.4, 0.2]);
    for ((s, b), e) in small.iter().zip(&big).zip(w.envelope()) {
        assert!(s <= b && b <= e);
    }
    assert_eq!(w.union_supports(&[-3.0, 0.0], &[0.0, 0.0]), w.envelope());
}

#[test]
fn shrinking_variances_shrink_the_envelope() {
    let (model, w) = scalar_wrapper(0.2);
    let grid: AnchorGrid = w.grid().unwrap().clone();
    let posts: Vec<_> = grid.anchors().iter().map(|a| model.posterior(&xv_to_z(w.gain(), a), 0.0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let shrunk: Vec<_> = posts
        .iter()
        .map(|p| {
            let mut q = p.clone();
            q.var.iter_mut().for_each(|v| *v *= rng.gen_range(0.1..1.0));
            q
        })
        .collect();
    let mk = |ps: &[_]| {
        DisturbanceWrapper::from_posteriors(
            grid.clone(),
            w.gain().clone(),
            w.directions().clone(),
            w.lipschitz().clone(),
            w.c(),
            ps,
        )
        .unwrap()
    };
    let (a, b) = (mk(&posts), mk(&shrunk));
    for (x, y) in b.envelope().iter().zip(a.envelope()) {
        assert!(x <= y);
    }
}

#[test]
fn nesting_caps_with_previous_layers() {
    let (_, mut newer) = scalar_wrapper(0.2);
    let (_, older) = scalar_wrapper(0.2);
    let older = {
        let json = older.to_json();
        DisturbanceWrapper::from_json(&json).unwrap()
    };
    newer.nest_within(&older).unwrap();
    assert_eq!(newer.layers(), 2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let xv = [rng.gen_range(-1.0..1.0), rng.gen_range(-0.3..0.3)];
        for (a, b) in newer.query_supports(&xv).iter().zip(older.query_supports(&xv)) {
            assert!(*a <= b);
        }
    }
    let (_, other) = scalar_wrapper(0.5);
    assert!(newer.nest_within(&other).is_err());
}

#[test]
fn serialization_round_trip() {
    let (_, w) = scalar_wrapper(0.1);
    let back = DisturbanceWrapper::from_json(&w.to_json()).unwrap();
    assert_eq!(back.envelope(), w.envelope());
    assert_eq!(back.query_supports(&[0.33, -0.1]), w.query_supports(&[0.33, -0.1]));
    assert_eq!(back.to_json(), w.to_json());
    assert!(DisturbanceWrapper::from_json(&w.to_json().replace("\"schema\": 1", "\"schema\": 9")).is_err());
}
