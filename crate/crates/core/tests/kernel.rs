mod common;

use common::{dense_full_resolvent, dense_resolvent, max_abs_diff, sup};
use ndarray::Array2;
use pide_backstep::kernel::solve_k_characteristics;
use pide_backstep::plant::sample_plant_with;
use pide_backstep::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn plant(tau: f64, h: f64, mu: [f64; 3]) -> PlantConfig {
    PlantConfig::new(
        tau,
        h,
        CoefficientModel::chebyshev(mu[0], mu[1], mu[2], 9.0),
    )
    .unwrap()
}

fn rel_linf(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    max_abs_diff(a.as_slice().unwrap(), b.as_slice().unwrap()) / sup(b.iter().copied())
}

#[test]
fn inverse_kernels_match_dense_solves_on_six_nodes() {
    let cfg = plant(0.7, 0.3, [5.0, 4.0, 3.0]);
    let grid = SpatialGrid::with_intervals(5).unwrap();
    let coeff = eval_coefficients(&cfg, grid);
    let kernels = solve_control_kernels(&cfg, &coeff, &SolverOptions::default()).unwrap();
    let inv = solve_inverse(&kernels, &SolverOptions::default()).unwrap();
    let ds = grid.ds();

    let b = dense_resolvent(&kernels.k, ds);
    assert!(max_abs_diff(inv.b.as_slice().unwrap(), b.as_slice().unwrap()) <= 1e-10);

    let nodes = grid.nodes();
    let force = |g: &dyn Fn(f64) -> f64, scale: f64| {
        Array2::from_shape_fn((6, 6), |(i, j)| scale * g(nodes[i] + scale * nodes[j]))
    };
    let d = dense_full_resolvent(&kernels.k, &force(&|p| kernels.l_at(p), cfg.h), ds);
    let e = dense_full_resolvent(&kernels.k, &force(&|p| kernels.j_at(p), cfg.eta()), ds);
    assert!(max_abs_diff(inv.d.as_slice().unwrap(), d.as_slice().unwrap()) <= 1e-10);
    assert!(max_abs_diff(inv.e.as_slice().unwrap(), e.as_slice().unwrap()) <= 1e-10);
}

#[test]
fn successive_approximation_agrees_with_characteristics_on_random_plants() {
    let grid = SpatialGrid::new(0.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..3 {
        let cfg = sample_plant_with(&mut rng, &SamplingRanges::default()).unwrap();
        let coeff = eval_coefficients(&cfg, grid);
        let k = solve_k(&coeff, cfg.tau, &SolverOptions::default())
            .unwrap()
            .k;
        let oracle = solve_k_characteristics(&coeff, cfg.tau, 1).unwrap();
        let rel = rel_linf(&k, &oracle);
        assert!(rel <= 1e-3, "tau {} rel {rel}", cfg.tau);
    }
}

#[test]
fn short_recycle_delay_couples_the_boundary() {
    // with s + tau < 1 on part of the grid, c enters K through the boundary
    let grid = SpatialGrid::new(0.02).unwrap();
    let a = plant(0.6, 0.2, [5.0, 5.0, 5.0]);
    let b = a
        .with_coefficients(CoefficientModel::Chebyshev {
            mu1: 5.0,
            mu2: 5.0,
            mu3: 5.0,
            amplitude_f: 9.0,
            amplitude_c: 2.0,
        })
        .unwrap();
    let ka = solve_k(
        &eval_coefficients(&a, grid),
        a.tau,
        &SolverOptions::default(),
    )
    .unwrap()
    .k;
    let kb = solve_k(
        &eval_coefficients(&b, grid),
        b.tau,
        &SolverOptions::default(),
    )
    .unwrap()
    .k;
    assert!(rel_linf(&ka, &kb) > 1e-3);
}

#[test]
fn delay_free_kernel_solves() {
    let cfg = PlantConfig::reference();
    let coeff = eval_coefficients(&cfg, SpatialGrid::new(0.02).unwrap());
    let k0 = solve_k(&coeff, 0.0, &SolverOptions::default()).unwrap().k;
    let k1 = solve_k(&coeff, cfg.tau, &SolverOptions::default())
        .unwrap()
        .k;
    assert!(k0.iter().all(|v| v.is_finite()));
    assert!(rel_linf(&k0, &k1) > 1e-3);
}

fn with_c_amplitude(cfg: &PlantConfig, amplitude_c: f64) -> PlantConfig {
    let CoefficientModel::Chebyshev {
        mu1,
        mu2,
        mu3,
        amplitude_f,
        ..
    } = cfg.coefficients.clone()
    else {
        unreachable!()
    };
    cfg.with_coefficients(CoefficientModel::Chebyshev {
        mu1,
        mu2,
        mu3,
        amplitude_f,
        amplitude_c,
    })
    .unwrap()
}

fn plant_strategy(tau: std::ops::Range<f64>) -> impl Strategy<Value = PlantConfig> {
    (tau, 0.05f64..0.7, 3.0f64..6.0, 3.0f64..6.0, 3.0f64..6.0)
        .prop_filter_map("h < tau", |(tau, h, a, b, c)| {
            (h < tau).then(|| plant(tau, h, [a, b, c]))
        })
}

fn smooth_profile(rng: &mut ChaCha8Rng, nodes: &[f64]) -> Vec<f64> {
    let a: [f64; 3] = [
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ];
    nodes
        .iter()
        .map(|s| a[0] + a[1] * (std::f64::consts::PI * s).sin() + a[2] * (3.0 * s).cos())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// For `tau >= 1` the boundary value vanishes, so `K` cannot depend on `c`.
    #[test]
    fn long_recycle_delay_decouples_k_from_c(cfg in plant_strategy(1.0..2.0)) {
        let grid = SpatialGrid::new(0.02).unwrap();
        let opts = SolverOptions::fixed(40);
        let doubled = with_c_amplitude(&cfg, 2.0);
        let k1 = solve_k(&eval_coefficients(&cfg, grid), cfg.tau, &opts).unwrap().k;
        let k2 = solve_k(&eval_coefficients(&doubled, grid), doubled.tau, &opts).unwrap().k;
        prop_assert_eq!(k1, k2);
    }

    /// With `K` independent of `c`, `L` and `J` are linear in `c`.
    #[test]
    fn delay_kernels_scale_with_c(cfg in plant_strategy(1.0..2.0), scale in 0.25f64..4.0) {
        let grid = SpatialGrid::new(0.02).unwrap();
        let opts = SolverOptions::default();
        let scaled = with_c_amplitude(&cfg, scale);
        let a = solve_control_kernels(&cfg, &eval_coefficients(&cfg, grid), &opts).unwrap();
        let b = solve_control_kernels(&scaled, &eval_coefficients(&scaled, grid), &opts).unwrap();
        let tol = 1e-12 * scale * (1.0 + sup(a.j.iter().copied()).max(sup(a.l.iter().copied())));
        for (x, y) in a.j.iter().chain(&a.l).zip(b.j.iter().chain(&b.l)) {
            prop_assert!((scale * x - y).abs() <= tol, "{} vs {}", scale * x, y);
        }
    }

    /// Forward then inverse transform recovers the state to first order in the spacing.
    #[test]
    fn transform_round_trip(cfg in plant_strategy(0.3..2.0), seed in any::<u64>()) {
        let grid = SpatialGrid::new(0.01).unwrap();
        let coeff = eval_coefficients(&cfg, grid);
        let opts = SolverOptions::default();
        let kernels = solve_control_kernels(&cfg, &coeff, &opts).unwrap();
        let inv = solve_inverse(&kernels, &opts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes = grid.nodes();
        let (x, v, u) = (smooth_profile(&mut rng, &nodes), smooth_profile(&mut rng, &nodes), smooth_profile(&mut rng, &nodes));
        let z = transform_forward(&x, &v, &u, &kernels);
        let back = transform_inverse(&z, &v, &u, &inv);
        let scale = sup(x.iter().chain(&v).chain(&u).copied());
        let err = max_abs_diff(&x, &back);
        prop_assert!(err <= 10.0 * grid.ds() * scale, "err {err}, scale {scale}");
    }

    #[test]
    fn random_plants_satisfy_the_bounds(seed in any::<u64>()) {
        let cfg = sample_plant(seed, &SamplingRanges::default()).unwrap();
        let report = check_plant_bounds(&cfg, SpatialGrid::new(0.02).unwrap(), &SolverOptions::default()).unwrap();
        prop_assert!(report.passed(), "{:?}", report.checks.iter().filter(|c| c.violations > 0).collect::<Vec<_>>());
    }
}
