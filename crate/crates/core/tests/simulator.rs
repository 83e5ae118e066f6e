mod common;

use common::{simpson, sup};
use pide_backstep::verify::default_decay_window;
use pide_backstep::*;
use proptest::prelude::*;
use std::f64::consts::PI;

fn transport_only() -> PlantConfig {
    PlantConfig::new(1.0, 0.5, CoefficientModel::zero()).unwrap()
}

fn transport_error(ds: f64) -> f64 {
    let cfg = transport_only();
    let coeff = eval_coefficients(&cfg, SpatialGrid::new(ds).unwrap());
    let n = coeff.grid().len();
    let nodes = coeff.grid().nodes();
    let profile = |s: f64| (PI * s).sin().powi(2);
    let x0: Vec<f64> = nodes.iter().map(|&s| profile(s)).collect();
    let sim = SimulationConfig {
        horizon: 0.5,
        dt: Some(0.2 * ds),
        snapshot_stride: Some(1),
        ..SimulationConfig::default()
    };
    let gains = GainProvider::analytic(ControlGains::zeros(n), None);
    let traj = run(Scenario::OpenLoop, &cfg, &coeff, &gains, &x0, &sim).unwrap();
    let snap = traj.snapshots.last().unwrap();
    assert!((snap.t - 0.5).abs() < 1e-9);
    let exact: Vec<f64> = nodes
        .iter()
        .map(|&s| if s >= 0.5 { profile(s - 0.5) } else { 0.0 })
        .collect();
    common::max_abs_diff(&snap.x, &exact)
}

#[test]
fn pure_transport_converges_to_the_shifted_profile() {
    let errors: Vec<f64> = [0.01, 0.005, 0.0025]
        .into_iter()
        .map(transport_error)
        .collect();
    assert!(errors[2] <= 0.02, "{errors:?}");
    for w in errors.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.4..=0.75).contains(&ratio), "{errors:?}");
    }
}

#[test]
fn control_law_matches_fine_quadrature() {
    let (h, eta) = (0.4, 0.7);
    let grid = SpatialGrid::new(0.01).unwrap();
    let nodes = grid.nodes();
    let sample = |g: fn(f64) -> f64| nodes.iter().map(|&s| g(s)).collect::<Vec<f64>>();
    let gains = ControlGains {
        k0: sample(f64::cos),
        l: sample(|r| r * r),
        j: sample(|r| (-r).exp()),
    };
    let x = sample(|s| (2.0 * s).sin());
    let v = sample(|r| 1.0 + r);
    let u = sample(f64::cos);
    let got = control_full_state(&x, &v, &u, &gains, h, eta, grid.ds());
    let exact = simpson(|q| q.cos() * (2.0 * q).sin(), 0.0, 1.0, 2000)
        + h * simpson(|r| r * r * (1.0 + r), 0.0, 1.0, 2000)
        + eta * simpson(|r| (-r).exp() * r.cos(), 0.0, 1.0, 2000);
    assert!(
        (got - exact).abs() <= 1e-4 * exact.abs(),
        "{got} vs {exact}"
    );
}

#[test]
fn runs_are_deterministic() {
    let cfg = PlantConfig::reference();
    let coeff = eval_coefficients(&cfg, SpatialGrid::training());
    let opts = SolverOptions::default();
    let kernels = solve_control_kernels(&cfg, &coeff, &opts).unwrap();
    let gains = GainProvider::analytic(
        ControlGains::from_kernels(&kernels),
        Some(observer_gains(&cfg, &coeff, &opts).unwrap()),
    );
    let x0: Vec<f64> = coeff.grid().nodes().iter().map(|s| s.sin()).collect();
    let sim = SimulationConfig {
        horizon: 3.0,
        observer_x0: Some(vec![0.0; x0.len()]),
        ..SimulationConfig::default()
    };
    let a = run(Scenario::OutputFeedback, &cfg, &coeff, &gains, &x0, &sim).unwrap();
    let b = run(Scenario::OutputFeedback, &cfg, &coeff, &gains, &x0, &sim).unwrap();
    assert_eq!(a, b);
}

#[test]
fn csv_export_has_the_fixed_schema() {
    let cfg = PlantConfig::reference();
    let coeff = eval_coefficients(&cfg, SpatialGrid::training());
    let gains = GainProvider::analytic(ControlGains::zeros(51), None);
    let x0 = vec![1.0; 51];
    let sim = SimulationConfig {
        horizon: 0.1,
        snapshot_stride: Some(50),
        ..SimulationConfig::default()
    };
    let traj = run(Scenario::OpenLoop, &cfg, &coeff, &gains, &x0, &sim).unwrap();
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,l2_x,l2_v,l2_u,U"));
    assert_eq!(lines.count(), traj.len());
    let mut buf = Vec::new();
    traj.write_snapshots_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("t,s,x\n"));
    assert_eq!(text.lines().count(), 1 + 51 * traj.snapshots.len());
}

#[test]
fn too_large_time_step_is_rejected() {
    let cfg = PlantConfig::reference();
    let coeff = eval_coefficients(&cfg, SpatialGrid::training());
    let gains = GainProvider::analytic(ControlGains::zeros(51), None);
    let sim = SimulationConfig {
        dt: Some(0.05),
        ..SimulationConfig::default()
    };
    let r = run(
        Scenario::OpenLoop,
        &cfg,
        &coeff,
        &gains,
        &vec![0.0; 51],
        &sim,
    );
    assert!(matches!(r, Err(Error::Cfl { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Exact state feedback stabilises every sampled plant.
    #[test]
    fn exact_state_feedback_decays(seed in any::<u64>()) {
        let cfg = sample_plant(seed, &SamplingRanges::default()).unwrap();
        let coeff = eval_coefficients(&cfg, SpatialGrid::training());
        let kernels = solve_control_kernels(&cfg, &coeff, &SolverOptions::default()).unwrap();
        let gains = GainProvider::analytic(ControlGains::from_kernels(&kernels), None);
        let x0: Vec<f64> = coeff.grid().nodes().iter().map(|s| s.sin()).collect();
        let sim = SimulationConfig { horizon: 8.0, ..SimulationConfig::default() };
        let traj = run(Scenario::StateFeedback, &cfg, &coeff, &gains, &x0, &sim).unwrap();
        let alpha = decay_rate(&traj, default_decay_window(&cfg, &traj)).unwrap();
        prop_assert!(alpha > 0.0, "alpha {alpha}");
        prop_assert!(sup(traj.l2_x.iter().copied()).is_finite());
    }
}
