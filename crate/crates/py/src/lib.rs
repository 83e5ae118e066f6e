//! Python bindings: kernel and gain solves, simulation and verification suites.

use pide_backstep::simulator::{run, ControlGains, GainProvider, Scenario, SimulationConfig};
use pide_backstep::suites::{run_suite, Suite, SuiteInput};
use pide_backstep::{
    eval_coefficients, observer_gains as solve_gains, solve_control_kernels, CoefficientModel,
    PlantConfig, SolverOptions, SpatialGrid,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: pide_backstep::Error) -> PyErr {
    use pide_backstep::Error::*;
    match e {
        NonConvergence { .. } | Cfl { .. } | NonFinite { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn plant(tau: f64, h: f64, mu: (f64, f64, f64), amplitude_f: f64) -> PyResult<PlantConfig> {
    PlantConfig::new(
        tau,
        h,
        CoefficientModel::chebyshev(mu.0, mu.1, mu.2, amplitude_f),
    )
    .map_err(to_py)
}

fn rows(a: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Backstepping kernels and the sampled control gains for one plant.
#[pyfunction]
#[pyo3(signature = (tau=1.0, h=0.5, mu=(5.0, 5.0, 5.0), amplitude_f=9.0, ds=0.02))]
fn control_kernels<'py>(
    py: Python<'py>,
    tau: f64,
    h: f64,
    mu: (f64, f64, f64),
    amplitude_f: f64,
    ds: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = plant(tau, h, mu, amplitude_f)?;
    let coeff = eval_coefficients(&cfg, SpatialGrid::new(ds).map_err(to_py)?);
    let k = solve_control_kernels(&cfg, &coeff, &SolverOptions::default()).map_err(to_py)?;
    let gains = ControlGains::from_kernels(&k);
    let out = PyDict::new(py);
    out.set_item("s", coeff.grid().nodes())?;
    out.set_item("K", rows(&k.k))?;
    out.set_item("L", k.l.clone())?;
    out.set_item("J", k.j.clone())?;
    out.set_item("k0", gains.k0)?;
    out.set_item("l_gain", gains.l)?;
    out.set_item("j_gain", gains.j)?;
    Ok(out)
}

/// Observer gains `(Q1, Q2)` sampled on the grid.
#[pyfunction]
#[pyo3(signature = (tau=1.0, h=0.5, mu=(5.0, 5.0, 5.0), amplitude_f=9.0, ds=0.02))]
fn observer_gains(
    tau: f64,
    h: f64,
    mu: (f64, f64, f64),
    amplitude_f: f64,
    ds: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let cfg = plant(tau, h, mu, amplitude_f)?;
    let coeff = eval_coefficients(&cfg, SpatialGrid::new(ds).map_err(to_py)?);
    let g = solve_gains(&cfg, &coeff, &SolverOptions::default()).map_err(to_py)?;
    Ok((g.q1, g.q2))
}

/// Simulate with analytic gains; returns the recorded time series.
#[pyfunction]
#[pyo3(signature = (mode="state_fb", tau=1.0, h=0.5, mu=(5.0, 5.0, 5.0), amplitude_f=9.0, ds=0.02, horizon=10.0, x0=None, xhat0=None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    mode: &str,
    tau: f64,
    h: f64,
    mu: (f64, f64, f64),
    amplitude_f: f64,
    ds: f64,
    horizon: f64,
    x0: Option<Vec<f64>>,
    xhat0: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = plant(tau, h, mu, amplitude_f)?;
    let coeff = eval_coefficients(&cfg, SpatialGrid::new(ds).map_err(to_py)?);
    let opts = SolverOptions::default();
    let n = coeff.grid().len();
    let (scenario, control) = match mode {
        "open_loop" => (Scenario::OpenLoop, ControlGains::zeros(n)),
        "uncompensated" => (
            Scenario::Uncompensated,
            ControlGains::uncompensated(&coeff, &opts).map_err(to_py)?,
        ),
        "state_fb" | "output_fb" => (
            if mode == "state_fb" {
                Scenario::StateFeedback
            } else {
                Scenario::OutputFeedback
            },
            ControlGains::from_kernels(&solve_control_kernels(&cfg, &coeff, &opts).map_err(to_py)?),
        ),
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let xhat0 = xhat0.or((mode == "output_fb").then_some(0.0));
    let observer = match xhat0 {
        Some(_) => Some(solve_gains(&cfg, &coeff, &opts).map_err(to_py)?),
        None => None,
    };
    let x0 = x0.unwrap_or_else(|| coeff.grid().nodes().iter().map(|s| s.sin()).collect());
    let sim = SimulationConfig {
        horizon,
        observer_x0: xhat0.map(|v| vec![v; n]),
        ..SimulationConfig::default()
    };
    let traj = py
        .detach(|| {
            run(
                scenario,
                &cfg,
                &coeff,
                &GainProvider::analytic(control, observer),
                &x0,
                &sim,
            )
        })
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("t", traj.times)?;
    out.set_item("l2_x", traj.l2_x)?;
    out.set_item("l2_v", traj.l2_v)?;
    out.set_item("l2_u", traj.l2_u)?;
    out.set_item("U", traj.control)?;
    out.set_item("estimation_error", traj.estimation_error)?;
    Ok(out)
}

/// Run a verification suite and return its report as a JSON string.
#[pyfunction]
#[pyo3(signature = (suite, n=None, seed=None, ds=None, jobs=None, runs=None))]
fn verify(
    py: Python<'_>,
    suite: &str,
    n: Option<usize>,
    seed: Option<u64>,
    ds: Option<f64>,
    jobs: Option<usize>,
    runs: Option<usize>,
) -> PyResult<String> {
    let suite: Suite = suite.parse().map_err(to_py)?;
    let input = SuiteInput {
        n,
        seed,
        ds,
        jobs,
        runs,
    };
    let report = py.detach(|| run_suite(suite, &input)).map_err(to_py)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn pide_backstep_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(control_kernels, m)?)?;
    m.add_function(wrap_pyfunction!(observer_gains, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
