//! Verification suites shared by the `verify` command and the acceptance tests.
//!
//! Every suite returns a [`SuiteReport`] with one [`SubCheck`] per pass/fail condition, the
//! echoed input and suite-specific details.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::kernel::{
    kernel_residual, solve_control_kernels, solve_k, solve_k_characteristics, SolverOptions,
};
use crate::neuralop::{
    bench_inference, reference_forward, DeepONetConfig, DeepONetWeights, GainFamily, NetworkSet,
};
use crate::observer::observer_gains;
use crate::plant::{
    eval_coefficients, sample_plant_with, PlantConfig, SamplingRanges, SpatialGrid,
};
use crate::quad::sup_norm;
use crate::simulator::{
    run, ControlGains, GainProvider, InputSignal, Scenario, SimulationConfig, Trajectory,
};
use crate::verify::{
    check_plant_bounds, decay_rate, default_decay_window, lipschitz_probe, perturb_control_gains,
    perturb_observer_gains, transform_forward, Direction,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Crossval,
    Residual,
    Bounds,
    Transform,
    Decay,
    Observer,
    Robustness,
    Lipschitz,
    Forward,
    Timing,
}

impl Suite {
    pub const ALL: [Suite; 10] = [
        Suite::Crossval,
        Suite::Residual,
        Suite::Bounds,
        Suite::Transform,
        Suite::Decay,
        Suite::Observer,
        Suite::Robustness,
        Suite::Lipschitz,
        Suite::Forward,
        Suite::Timing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Crossval => "crossval",
            Suite::Residual => "residual",
            Suite::Bounds => "bounds",
            Suite::Transform => "transform",
            Suite::Decay => "decay",
            Suite::Observer => "observer",
            Suite::Robustness => "robustness",
            Suite::Lipschitz => "lipschitz",
            Suite::Forward => "forward",
            Suite::Timing => "timing",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

/// Inputs common to all suites; `None` picks the suite default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteInput {
    /// Number of random plants (bounds, lipschitz).
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub ds: Option<f64>,
    /// Worker threads for plant sweeps.
    pub jobs: Option<usize>,
    /// Repetitions per timing measurement.
    pub runs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub tool_version: String,
    pub input: Value,
    pub checks: Vec<SubCheck>,
    pub details: Value,
}

impl SuiteReport {
    fn new(suite: Suite, input: Value, checks: Vec<SubCheck>, details: Value) -> Self {
        Self {
            suite,
            passed: checks.iter().all(|c| c.passed),
            tool_version: TOOL_VERSION.to_string(),
            input,
            checks,
            details,
        }
    }

    pub fn check(&self, name: &str) -> Option<&SubCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// `name: detail` of every sub-check, separated by `; `.
    pub fn summary(&self) -> String {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{}{}: {}",
                    if c.passed { "" } else { "!" },
                    c.name,
                    c.detail
                )
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

fn sub(name: &str, passed: bool, detail: String) -> SubCheck {
    SubCheck {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Plant `index` of the seeded sweep; independent of evaluation order.
pub fn sweep_plant(seed: u64, index: u64, ranges: &SamplingRanges) -> Result<PlantConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    sample_plant_with(&mut rng, ranges)
}

fn in_pool<T: Send>(jobs: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(j) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work)),
        None => Ok(work()),
    }
}

pub fn run_suite(suite: Suite, input: &SuiteInput) -> Result<SuiteReport> {
    match suite {
        Suite::Crossval => crossval(input),
        Suite::Residual => residual(input),
        Suite::Bounds => bounds(input),
        Suite::Transform => transform(input),
        Suite::Decay => decay(input),
        Suite::Observer => observer(input),
        Suite::Robustness => robustness(input),
        Suite::Lipschitz => lipschitz(input),
        Suite::Forward => forward(input),
        Suite::Timing => timing(input),
    }
}

/// Successive approximation against the characteristics oracle on the reference plant.
pub fn crossval(input: &SuiteInput) -> Result<SuiteReport> {
    let ds = input.ds.unwrap_or(0.005);
    let cfg = PlantConfig::reference();
    let coeff = eval_coefficients(&cfg, SpatialGrid::new(ds)?);
    let start = Instant::now();
    let kernels = solve_control_kernels(&cfg, &coeff, &SolverOptions::default())?;
    let seconds = start.elapsed().as_secs_f64();
    let oracle = solve_k_characteristics(&coeff, cfg.tau, 1)?;
    let diff = kernels
        .k
        .iter()
        .zip(oracle.iter())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = oracle.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let rel = diff / scale;
    Ok(SuiteReport::new(
        Suite::Crossval,
        json!({ "plant": cfg, "ds": ds }),
        vec![
            sub("rel_linf", rel <= 1e-3, format!("{rel:.3e} <= 1e-3")),
            sub(
                "runtime",
                seconds <= 10.0,
                format!("{seconds:.4} s <= 10 s"),
            ),
        ],
        json!({ "rel_linf": rel, "seconds": seconds, "iterations": kernels.convergence.iterations }),
    ))
}

/// Kernel residual at three spacings; each halving must shrink it by a factor in `[0.4, 0.7]`.
pub fn residual(_input: &SuiteInput) -> Result<SuiteReport> {
    let cfg = PlantConfig::reference();
    let spacings = [0.02, 0.01, 0.005];
    let mut sups = Vec::new();
    for ds in spacings {
        let coeff = eval_coefficients(&cfg, SpatialGrid::new(ds)?);
        let k = solve_k(&coeff, cfg.tau, &SolverOptions::default())?.k;
        sups.push(kernel_residual(&k, &coeff, cfg.tau).sup());
    }
    let ratios: Vec<f64> = sups.windows(2).map(|w| w[1] / w[0]).collect();
    let checks = ratios
        .iter()
        .zip(spacings.windows(2))
        .map(|(r, w)| {
            sub(
                &format!("ratio_{}_{}", w[0], w[1]),
                (0.4..=0.7).contains(r),
                format!("{r:.3} in [0.4, 0.7]"),
            )
        })
        .collect();
    Ok(SuiteReport::new(
        Suite::Residual,
        json!({ "plant": cfg, "ds": spacings }),
        checks,
        json!({ "residual_sup": sups, "ratios": ratios }),
    ))
}

/// Pointwise kernel and gain bounds on seeded random plants.
pub fn bounds(input: &SuiteInput) -> Result<SuiteReport> {
    let n = input.n.unwrap_or(100);
    let seed = input.seed.unwrap_or(7);
    let ds = input.ds.unwrap_or(0.02);
    let grid = SpatialGrid::new(ds)?;
    let ranges = SamplingRanges::default();
    let opts = SolverOptions::default();
    let results: Vec<Result<(u64, usize, f64)>> = in_pool(input.jobs, || {
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let cfg = sweep_plant(seed, i, &ranges)?;
                let report = check_plant_bounds(&cfg, grid, &opts)?;
                let worst = report
                    .checks
                    .iter()
                    .map(|c| c.worst_margin)
                    .fold(f64::INFINITY, f64::min);
                Ok((i, report.violations(), worst))
            })
            .collect()
    })?;
    let results: Vec<(u64, usize, f64)> = results.into_iter().collect::<Result<_>>()?;
    let violations: usize = results.iter().map(|r| r.1).sum();
    let failing: Vec<u64> = results.iter().filter(|r| r.1 > 0).map(|r| r.0).collect();
    let worst = results.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    Ok(SuiteReport::new(
        Suite::Bounds,
        json!({ "n": n, "seed": seed, "ds": ds, "ranges": ranges }),
        vec![sub(
            "violations",
            violations == 0,
            format!("{violations} pointwise violations over {n} plants, worst margin {worst:.3e}"),
        )],
        json!({ "violations": violations, "failing_plants": failing, "worst_margin": worst }),
    ))
}

fn state_feedback_run(
    cfg: &PlantConfig,
    ds: f64,
    x0: impl Fn(f64) -> f64,
    sim: &SimulationConfig,
) -> Result<Trajectory> {
    let coeff = eval_coefficients(cfg, SpatialGrid::new(ds)?);
    let kernels = solve_control_kernels(cfg, &coeff, &SolverOptions::default())?;
    let gains = GainProvider::analytic(ControlGains::from_kernels(&kernels), None);
    let x0: Vec<f64> = coeff.grid().nodes().into_iter().map(x0).collect();
    run(Scenario::StateFeedback, cfg, &coeff, &gains, &x0, sim)
}

/// Closed loop with exact kernels: the transformed state must vanish at `s = 0`.
pub fn transform(input: &SuiteInput) -> Result<SuiteReport> {
    let ds = input.ds.unwrap_or(0.02);
    let cfg = PlantConfig::reference();
    let coeff = eval_coefficients(&cfg, SpatialGrid::new(ds)?);
    let kernels = solve_control_kernels(&cfg, &coeff, &SolverOptions::default())?;
    let gains = GainProvider::analytic(ControlGains::from_kernels(&kernels), None);
    let x0: Vec<f64> = coeff.grid().nodes().iter().map(|s| s.sin()).collect();
    let sim = SimulationConfig {
        horizon: 10.0,
        snapshot_stride: Some(50),
        ..SimulationConfig::default()
    };
    let traj = run(Scenario::StateFeedback, &cfg, &coeff, &gains, &x0, &sim)?;
    let x_sup = traj
        .snapshots
        .iter()
        .map(|s| sup_norm(&s.x))
        .fold(sup_norm(&x0), f64::max);
    let start = cfg.tau + cfg.h;
    let mut worst = 0.0_f64;
    let mut count = 0;
    for snap in traj.snapshots.iter().filter(|s| s.t > start) {
        let z = transform_forward(&snap.x, &snap.v, &snap.u, &kernels);
        worst = worst.max(z[0].abs());
        count += 1;
    }
    let limit = 5.0 * ds * x_sup;
    Ok(SuiteReport::new(
        Suite::Transform,
        json!({ "plant": cfg, "ds": ds, "x0": "sin(s)", "horizon": sim.horizon }),
        vec![sub(
            "z0",
            worst <= limit && count > 0,
            format!("max |z(0,t)| = {worst:.3e} <= 5 ds sup|x| = {limit:.3e} over {count} records"),
        )],
        json!({ "max_z0": worst, "limit": limit, "records": count, "x_sup": x_sup }),
    ))
}

fn norm_ratio(traj: &Trajectory, t: f64) -> Result<f64> {
    let k = traj
        .index_at(t)
        .ok_or_else(|| Error::Verification(format!("no record at t = {t}")))?;
    Ok(traj.l2_x[k] / traj.l2_x[0])
}

/// Exact state feedback decays; the delay-ignorant baseline does not.
pub fn decay(input: &SuiteInput) -> Result<SuiteReport> {
    let ds = input.ds.unwrap_or(0.02);
    let cfg = PlantConfig::reference();
    let sim = SimulationConfig::default();
    let traj = state_feedback_run(&cfg, ds, f64::sin, &sim)?;
    let ratio = norm_ratio(&traj, 8.0)?;
    let alpha = decay_rate(&traj, default_decay_window(&cfg, &traj))?;

    let coeff = eval_coefficients(&cfg, SpatialGrid::new(ds)?);
    let baseline_gains = GainProvider::analytic(
        ControlGains::uncompensated(&coeff, &SolverOptions::default())?,
        None,
    );
    let x0: Vec<f64> = coeff.grid().nodes().into_iter().map(f64::sin).collect();
    let baseline = run(
        Scenario::Uncompensated,
        &cfg,
        &coeff,
        &baseline_gains,
        &x0,
        &sim,
    )?;
    let final_ratio = baseline.l2_x.last().copied().unwrap_or(f64::NAN) / baseline.l2_x[0];
    Ok(SuiteReport::new(
        Suite::Decay,
        json!({ "plant": cfg, "ds": ds, "x0": "sin(s)", "horizon": sim.horizon }),
        vec![
            sub(
                "state_fb_ratio",
                ratio <= 1e-2,
                format!("|x|(8)/|x|(0) = {ratio:.3e} <= 1e-2"),
            ),
            sub(
                "state_fb_alpha",
                alpha > 0.0,
                format!("alpha = {alpha:.4} > 0"),
            ),
            sub(
                "baseline_growth",
                final_ratio >= 1.0,
                format!(
                    "uncompensated |x|({})/|x|(0) = {final_ratio:.3e} >= 1",
                    sim.horizon
                ),
            ),
        ],
        json!({ "state_fb_ratio_t8": ratio, "alpha": alpha, "baseline_final_ratio": final_ratio }),
    ))
}

/// Open-loop plant driven by a test input with the observer running from `x̂0 = 10`.
pub fn observer(input: &SuiteInput) -> Result<SuiteReport> {
    let ds = input.ds.unwrap_or(0.02);
    let cfg = PlantConfig::reference();
    let coeff = eval_coefficients(&cfg, SpatialGrid::new(ds)?);
    let obs = observer_gains(&cfg, &coeff, &SolverOptions::default())?;
    let n = coeff.grid().len();
    let gains = GainProvider::analytic(ControlGains::zeros(n), Some(obs));
    let x0: Vec<f64> = coeff
        .grid()
        .nodes()
        .iter()
        .map(|s| (2.0 * std::f64::consts::PI * s).sin())
        .collect();
    let sim = SimulationConfig {
        horizon: 5.0,
        input: Some(InputSignal::observer_test()),
        observer_x0: Some(vec![10.0; n]),
        ..SimulationConfig::default()
    };
    let traj = run(Scenario::OpenLoop, &cfg, &coeff, &gains, &x0, &sim)?;
    let err = traj.estimation_error.as_ref().expect("observer ran");
    let k = traj
        .index_at(5.0)
        .ok_or_else(|| Error::Verification("no record at t = 5".into()))?;
    let ratio = err[k] / err[0];
    Ok(SuiteReport::new(
        Suite::Observer,
        json!({ "plant": cfg, "ds": ds, "x0": "sin(2 pi s)", "xhat0": 10.0, "input": sim.input, "horizon": sim.horizon }),
        vec![sub(
            "error_ratio",
            ratio <= 1e-3,
            format!("error(5)/error(0) = {ratio:.3e} <= 1e-3"),
        )],
        json!({ "error_ratio": ratio, "initial_error": err[0], "final_error": err[k] }),
    ))
}

/// Uniform gain perturbations must keep both closed loops decaying.
pub fn robustness(input: &SuiteInput) -> Result<SuiteReport> {
    let ds = input.ds.unwrap_or(0.02);
    let seed = input.seed.unwrap_or(7);
    let amplitude = 1e-2;
    let cfg = PlantConfig::reference();
    let opts = SolverOptions::default();
    let coeff = eval_coefficients(&cfg, SpatialGrid::new(ds)?);
    let kernels = solve_control_kernels(&cfg, &coeff, &opts)?;
    let obs = observer_gains(&cfg, &coeff, &opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let control = perturb_control_gains(&ControlGains::from_kernels(&kernels), amplitude, &mut rng);
    let obs = perturb_observer_gains(&obs, amplitude, &mut rng);
    let nodes = coeff.grid().nodes();
    let x0: Vec<f64> = nodes.iter().map(|s| s.sin()).collect();
    let sim = SimulationConfig::default();

    let state = run(
        Scenario::StateFeedback,
        &cfg,
        &coeff,
        &GainProvider::analytic(control.clone(), None),
        &x0,
        &sim,
    )?;
    let alpha_state = decay_rate(&state, default_decay_window(&cfg, &state))?;
    let output_sim = SimulationConfig {
        observer_x0: Some(vec![0.0; nodes.len()]),
        ..sim.clone()
    };
    let output = run(
        Scenario::OutputFeedback,
        &cfg,
        &coeff,
        &GainProvider::analytic(control, Some(obs)),
        &x0,
        &output_sim,
    )?;
    let alpha_output = decay_rate(&output, default_decay_window(&cfg, &output))?;
    Ok(SuiteReport::new(
        Suite::Robustness,
        json!({ "plant": cfg, "ds": ds, "seed": seed, "amplitude": amplitude, "x0": "sin(s)", "xhat0": 0.0, "horizon": sim.horizon }),
        vec![
            sub(
                "state_fb_alpha",
                alpha_state > 0.0,
                format!("alpha = {alpha_state:.4} > 0"),
            ),
            sub(
                "output_fb_alpha",
                alpha_output > 0.0,
                format!("alpha = {alpha_output:.4} > 0"),
            ),
        ],
        json!({ "alpha_state_fb": alpha_state, "alpha_output_fb": alpha_output }),
    ))
}

/// Finite-difference ratios at `δ = 1e-2` and `1e-3` on seeded random plants.
pub fn lipschitz(input: &SuiteInput) -> Result<SuiteReport> {
    let n = input.n.unwrap_or(10);
    let seed = input.seed.unwrap_or(7);
    let ds = input.ds.unwrap_or(0.02);
    let grid = SpatialGrid::new(ds)?;
    let ranges = SamplingRanges::default();
    let opts = SolverOptions::default();
    let delta = 1e-2;
    let jobs: Vec<(u64, Direction)> = (0..n as u64)
        .flat_map(|i| Direction::ALL.into_iter().map(move |d| (i, d)))
        .collect();
    let reports: Vec<Result<(u64, crate::verify::LipschitzReport)>> = in_pool(input.jobs, || {
        jobs.par_iter()
            .map(|&(i, d)| {
                Ok((
                    i,
                    lipschitz_probe(&sweep_plant(seed, i, &ranges)?, grid, delta, d, &opts)?,
                ))
            })
            .collect()
    })?;
    let reports: Vec<_> = reports.into_iter().collect::<Result<_>>()?;
    let mut checks = Vec::new();
    for d in Direction::ALL {
        let of_dir: Vec<_> = reports.iter().filter(|(_, r)| r.direction == d).collect();
        let unstable: Vec<String> = of_dir
            .iter()
            .flat_map(|(i, r)| {
                r.ratios
                    .iter()
                    .filter(|x| !x.stable(3.0))
                    .map(move |x| format!("plant {i} {} {:.3e}/{:.3e}", x.output, x.coarse, x.fine))
            })
            .collect();
        let worst = of_dir
            .iter()
            .flat_map(|(_, r)| r.ratios.iter())
            .filter(|x| {
                x.coarse > crate::verify::INSENSITIVE_RATIO
                    || x.fine > crate::verify::INSENSITIVE_RATIO
            })
            .map(|x| (x.coarse / x.fine).max(x.fine / x.coarse))
            .fold(1.0_f64, f64::max);
        let name = serde_json::to_value(d)?.as_str().unwrap_or("?").to_string();
        checks.push(sub(
            &name,
            unstable.is_empty(),
            if unstable.is_empty() {
                format!("worst coarse/fine spread {worst:.3} <= 3")
            } else {
                format!("unstable: {}", unstable.join(", "))
            },
        ));
    }
    let details: Vec<Value> = reports
        .iter()
        .map(|(i, r)| json!({ "plant": i, "report": r }))
        .collect();
    Ok(SuiteReport::new(
        Suite::Lipschitz,
        json!({ "n": n, "seed": seed, "ds": ds, "delta": [delta, delta / 10.0], "factor": 3.0 }),
        checks,
        Value::Array(details),
    ))
}

/// Optimised forward pass against the straight-line evaluator, plus a container round trip.
pub fn forward(input: &SuiteInput) -> Result<SuiteReport> {
    let seed = input.seed.unwrap_or(7);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut checks = Vec::new();
    let mut details = Vec::new();
    for (name, config) in [
        ("K", DeepONetConfig::control_kernel()),
        ("LJ", DeepONetConfig::delay_kernel()),
        ("Q", DeepONetConfig::observer_gain()),
    ] {
        let net = DeepONetWeights::random(config.clone(), seed)?;
        let container = net.to_container()?;
        let encoding: Vec<f64> = (0..config.input_channels * config.grid * config.grid)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let queries: Vec<f64> = (0..8 * config.trunk_input)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let fast = net.forward(&encoding, &queries)?;
        let slow = reference_forward(&container, &encoding, &queries)?;
        let err = fast
            .iter()
            .zip(&slow)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        checks.push(sub(
            &format!("forward_{name}"),
            err <= 1e-12,
            format!("max |diff| = {err:.2e} <= 1e-12"),
        ));
        let bytes = container.to_bytes()?;
        let back = Container::from_bytes(&bytes)?;
        let exact = back.to_bytes()? == bytes && DeepONetWeights::from_container(&back)? == net;
        checks.push(sub(
            &format!("roundtrip_{name}"),
            exact,
            format!("{} bytes bit-exact: {exact}", bytes.len()),
        ));
        details.push(json!({ "net": name, "parameters": config.parameter_count(), "max_abs_diff": err, "outputs": fast }));
    }
    Ok(SuiteReport::new(
        Suite::Forward,
        json!({ "seed": seed }),
        checks,
        Value::Array(details),
    ))
}

/// Solver versus full-size networks at `Δs ∈ {0.02, 0.01, 0.005}`.
pub fn timing(input: &SuiteInput) -> Result<SuiteReport> {
    let seed = input.seed.unwrap_or(7);
    let runs = input.runs.unwrap_or(5);
    let nets = NetworkSet::random(seed)?;
    let plants: Vec<PlantConfig> = (0..runs.max(1) as u64)
        .map(|i| sweep_plant(seed, i, &SamplingRanges::observer()))
        .collect::<Result<_>>()?;
    let spacings = [0.02, 0.01, 0.005];
    let rows = bench_inference(&nets, &plants, &spacings, runs, &SolverOptions::default())?;
    let mut checks = Vec::new();
    for family in [GainFamily::Control, GainFamily::Observer] {
        let of: Vec<_> = rows.iter().filter(|r| r.family == family).collect();
        let label = serde_json::to_value(family)?
            .as_str()
            .unwrap_or("?")
            .to_string();
        let (first, last) = (of[0], of[of.len() - 1]);
        let solver_growth = last.solver_seconds / first.solver_seconds;
        let net_growth = last.network_seconds / first.network_seconds;
        checks.push(sub(
            &format!("{label}_growth"),
            net_growth < solver_growth,
            format!("network x{net_growth:.2} vs solver x{solver_growth:.2} from ds 0.02 to 0.005"),
        ));
        checks.push(sub(
            &format!("{label}_speedup"),
            last.speedup >= 10.0,
            format!(
                "solver {:.4} s / network {:.4} s = {:.2}x >= 10x at ds 0.005",
                last.solver_seconds, last.network_seconds, last.speedup
            ),
        ));
    }
    Ok(SuiteReport::new(
        Suite::Timing,
        json!({ "seed": seed, "runs": runs, "ds": spacings }),
        checks,
        serde_json::to_value(&rows)?,
    ))
}
