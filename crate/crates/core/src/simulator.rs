//! Time stepping of the transport cascade
//!
//! ```text
//! x_t = -x_s + c(s) u(0,t) + ∫_s^1 f(s,q) x(q,t) dq,   x(0,t) = U(t)
//! h v_t = v_s,     v(1,t) = x(1,t)
//! eta u_t = u_s,   u(1,t) = v(0,t)
//! ```
//!
//! with first-order upwind differences, explicit Euler in time and trapezoid quadrature.
//! The measured output is `y(t) = v(0,t) = x(1, t - h)`.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::kernel::{solve_k, ControlKernels, SolverOptions};
use crate::observer::ObserverGains;
use crate::plant::{CoefficientField, PlantConfig};
use crate::quad::{interp_uniform, l2_norm, trapz_product};

/// Control gains sampled on the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    /// `K(0, q_j)`.
    pub k0: Vec<f64>,
    /// `L(h r_j)`.
    pub l: Vec<f64>,
    /// `J(eta r_j)`.
    pub j: Vec<f64>,
}

impl ControlGains {
    pub fn zeros(n: usize) -> Self {
        Self {
            k0: vec![0.0; n],
            l: vec![0.0; n],
            j: vec![0.0; n],
        }
    }

    pub fn from_kernels(kernels: &ControlKernels) -> Self {
        Self {
            k0: kernels.k0(),
            l: kernels.l_gain(),
            j: kernels.j_gain(),
        }
    }

    /// The backstepping law designed as if there were no recycle delay: `K` solved with
    /// `tau = 0` and no `L`, `J` terms.
    pub fn uncompensated(coeff: &CoefficientField, opts: &SolverOptions) -> Result<Self> {
        let k = solve_k(coeff, 0.0, opts)?.k;
        let n = coeff.grid().len();
        Ok(Self {
            k0: k.row(0).to_vec(),
            ..Self::zeros(n)
        })
    }

    /// Keeps only the `K` term.
    pub fn without_delay_terms(mut self) -> Self {
        self.l.iter_mut().for_each(|v| *v = 0.0);
        self.j.iter_mut().for_each(|v| *v = 0.0);
        self
    }

    pub fn len(&self) -> usize {
        self.k0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainKind {
    Analytic,
    File,
    Neural,
}

/// Gains handed to the stepper, whatever produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct GainProvider {
    pub kind: GainKind,
    pub control: ControlGains,
    pub observer: Option<ObserverGains>,
}

impl GainProvider {
    pub fn analytic(control: ControlGains, observer: Option<ObserverGains>) -> Self {
        Self {
            kind: GainKind::Analytic,
            control,
            observer,
        }
    }
}

/// `U = ∫ K(0,q) x dq + h ∫ L(hr) v dr + eta ∫ J(eta r) u dr`.
pub fn control_full_state(
    x: &[f64],
    v: &[f64],
    u: &[f64],
    gains: &ControlGains,
    h: f64,
    eta: f64,
    ds: f64,
) -> f64 {
    trapz_product(&gains.k0, x, ds)
        + h * trapz_product(&gains.l, v, ds)
        + eta * trapz_product(&gains.j, u, ds)
}

/// Same law evaluated on the observer estimates.
pub fn control_output_feedback(
    obs: &ObserverState,
    gains: &ControlGains,
    h: f64,
    eta: f64,
    ds: f64,
) -> f64 {
    control_full_state(&obs.xh, &obs.vh, &obs.uh, gains, h, eta, ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    OpenLoop,
    /// Backstepping law of the delay-free plant: `K` solved with `tau = 0`, no `L`, `J` terms.
    Uncompensated,
    StateFeedback,
    OutputFeedback,
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open_loop" | "open-loop" => Ok(Self::OpenLoop),
            "uncompensated" => Ok(Self::Uncompensated),
            "state_fb" | "state-fb" => Ok(Self::StateFeedback),
            "output_fb" | "output-fb" => Ok(Self::OutputFeedback),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

/// How the observer's delayed boundary `û(1,t) = x(1,t-h)` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    /// Use the simulated sensor transport output `v(0,t)`.
    #[default]
    Transport,
    /// Ring buffer of `x(1,·)` read at `t - h` with linear interpolation.
    DelayLine,
}

/// `Σ a_k sin(ω_k t + φ_k)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InputSignal {
    pub terms: Vec<(f64, f64, f64)>,
}

impl InputSignal {
    /// `5 sin(3πt) + 3 cos(2πt)`.
    pub fn observer_test() -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        Self {
            terms: vec![(5.0, 3.0 * PI, 0.0), (3.0, 2.0 * PI, FRAC_PI_2)],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|(a, w, p)| a * (w * t + p).sin())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub t: f64,
}

impl CascadeState {
    /// `x0` on the grid with `v0`, `u0` set to the constant `x0(1)`, which satisfies both couplings.
    pub fn steady_extension(x0: Vec<f64>) -> Self {
        let n = x0.len();
        let tail = *x0.last().unwrap_or(&0.0);
        Self {
            x: x0,
            v: vec![tail; n],
            u: vec![tail; n],
            t: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub xh: Vec<f64>,
    pub vh: Vec<f64>,
    pub uh: Vec<f64>,
    /// `x(1, k dt)` for `k = 0, 1, ...`; only filled in [`MeasurementMode::DelayLine`].
    pub boundary_history: Vec<f64>,
}

impl ObserverState {
    pub fn steady_extension(xh0: Vec<f64>) -> Self {
        let c = CascadeState::steady_extension(xh0);
        Self {
            xh: c.x,
            vh: c.v,
            uh: c.u,
            boundary_history: Vec::new(),
        }
    }
}

/// State snapshot stored along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub horizon: f64,
    /// Defaults to `min(0.001, 0.5 h Δs, 0.5 eta Δs)`.
    pub dt: Option<f64>,
    /// Record norms every `stride` steps.
    pub stride: usize,
    /// Record full states every this many steps.
    pub snapshot_stride: Option<usize>,
    pub measurement: MeasurementMode,
    /// Exogenous input used in place of the feedback law in [`Scenario::OpenLoop`].
    pub input: Option<InputSignal>,
    /// Initial observer state `x̂0`; runs the observer alongside the plant when set.
    /// Required for [`Scenario::OutputFeedback`].
    pub observer_x0: Option<Vec<f64>>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            dt: None,
            stride: 10,
            snapshot_stride: None,
            measurement: MeasurementMode::Transport,
            input: None,
            observer_x0: None,
        }
    }
}

/// Recorded run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub l2_x: Vec<f64>,
    pub l2_v: Vec<f64>,
    pub l2_u: Vec<f64>,
    pub control: Vec<f64>,
    /// `sqrt(‖x̃‖² + ‖ṽ‖² + ‖ũ‖²)` when an observer runs.
    pub estimation_error: Option<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
    pub dt: f64,
    pub ds: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `‖x‖² + ‖v‖² + ‖u‖²` at each record.
    pub fn energy(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.l2_x[k].powi(2) + self.l2_v[k].powi(2) + self.l2_u[k].powi(2))
            .collect()
    }

    /// Index of the first record at or after `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| s >= t - 1e-9)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,l2_x,l2_v,l2_u,U")?;
        for k in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.times[k], self.l2_x[k], self.l2_v[k], self.l2_u[k], self.control[k]
            )?;
        }
        Ok(())
    }

    pub fn write_snapshots_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,s,x")?;
        for snap in &self.snapshots {
            let m = (snap.x.len() - 1) as f64;
            for (i, x) in snap.x.iter().enumerate() {
                writeln!(out, "{},{},{}", snap.t, i as f64 / m, x)?;
            }
        }
        Ok(())
    }
}

/// Default time step for a plant and spacing.
pub fn default_dt(cfg: &PlantConfig, ds: f64) -> f64 {
    0.001_f64.min(0.5 * cfg.h * ds).min(0.5 * cfg.eta() * ds)
}

/// Largest time step the explicit upwind scheme accepts.
pub fn cfl_limit(cfg: &PlantConfig, ds: f64) -> f64 {
    ds.min(cfg.h * ds).min(cfg.eta() * ds)
}

/// Explicit stepper for the plant and, optionally, its observer.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    cfg: &'a PlantConfig,
    coeff: &'a CoefficientField,
    dt: f64,
    ds: f64,
    scratch: Vec<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(cfg: &'a PlantConfig, coeff: &'a CoefficientField, dt: f64) -> Result<Self> {
        let ds = coeff.grid().ds();
        let limit = cfl_limit(cfg, ds);
        if !(dt > 0.0) || dt > limit {
            return Err(Error::Cfl { dt, limit });
        }
        Ok(Self {
            cfg,
            coeff,
            dt,
            ds,
            scratch: vec![0.0; coeff.grid().len()],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Interior update of the x equation: transport, recycle input and nonlocal term.
    fn advance_x(&mut self, x: &mut [f64], recycle: f64, injection: Option<(&[f64], f64)>) {
        let n = x.len();
        let (dt, ds) = (self.dt, self.ds);
        for i in 0..n {
            let row = self.coeff.f.row(i);
            let row = row.as_slice().expect("standard layout");
            self.scratch[i] = trapz_product(&row[i..], &x[i..], ds);
        }
        let lambda = dt / ds;
        for i in (1..n).rev() {
            let mut src = self.coeff.c[i] * recycle + self.scratch[i];
            if let Some((q1, err)) = injection {
                src += q1[i] * err;
            }
            x[i] += -lambda * (x[i] - x[i - 1]) + dt * src;
        }
    }

    /// Leftward transport `speed * w_t = w_s` on the interior nodes `0..n-1`.
    fn advance_leftward(w: &mut [f64], lambda: f64, injection: Option<(&[f64], f64)>) {
        let n = w.len();
        for i in 0..n - 1 {
            w[i] += lambda * (w[i + 1] - w[i]);
            if let Some((gain, scaled)) = injection {
                w[i] += gain[i] * scaled;
            }
        }
    }

    /// Advances the plant by one step; `x(0)` is left for the caller to set.
    pub fn step_plant(&mut self, state: &mut CascadeState) {
        let recycle = state.u[0];
        let (h, eta) = (self.cfg.h, self.cfg.eta());
        let last = state.x.len() - 1;
        self.advance_x(&mut state.x, recycle, None);
        Self::advance_leftward(&mut state.v, self.dt / (h * self.ds), None);
        Self::advance_leftward(&mut state.u, self.dt / (eta * self.ds), None);
        state.v[last] = state.x[last];
        state.u[last] = state.v[0];
        state.t += self.dt;
    }

    /// Advances the observer by one step given the measurement `y = v(0,t)` at the start of
    /// the step and the delayed boundary value for `û(1)` at the end of it.
    pub fn step_observer(
        &mut self,
        obs: &mut ObserverState,
        gains: &ObserverGains,
        y: f64,
        delayed_boundary: f64,
    ) {
        let (h, eta) = (self.cfg.h, self.cfg.eta());
        let last = obs.xh.len() - 1;
        let err = y - obs.vh[0];
        let recycle = obs.uh[0];
        self.advance_x(&mut obs.xh, recycle, Some((&gains.q1, err)));
        Self::advance_leftward(
            &mut obs.vh,
            self.dt / (h * self.ds),
            Some((&gains.q2, self.dt * err / h)),
        );
        Self::advance_leftward(&mut obs.uh, self.dt / (eta * self.ds), None);
        obs.vh[last] = obs.xh[last];
        obs.uh[last] = delayed_boundary;
    }
}

fn l2_all(x: &[f64], v: &[f64], u: &[f64], ds: f64) -> (f64, f64, f64) {
    (l2_norm(x, ds), l2_norm(v, ds), l2_norm(u, ds))
}

fn error_norm(state: &CascadeState, obs: &ObserverState, ds: f64) -> f64 {
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p - q).collect() };
    let ex = diff(&state.x, &obs.xh);
    let ev = diff(&state.v, &obs.vh);
    let eu = diff(&state.u, &obs.uh);
    let (a, b, c) = l2_all(&ex, &ev, &eu, ds);
    (a * a + b * b + c * c).sqrt()
}

/// Runs a closed- or open-loop scenario from `x0` (with the steady extension for `v0`, `u0`).
pub fn run(
    scenario: Scenario,
    cfg: &PlantConfig,
    coeff: &CoefficientField,
    gains: &GainProvider,
    x0: &[f64],
    sim: &SimulationConfig,
) -> Result<Trajectory> {
    let n = coeff.grid().len();
    let ds = coeff.grid().ds();
    if x0.len() != n || gains.control.len() != n {
        return Err(Error::Shape(format!(
            "grid has {n} nodes, x0 has {}, gains have {}",
            x0.len(),
            gains.control.len()
        )));
    }
    if sim.stride == 0 || !(sim.horizon > 0.0) {
        return Err(Error::Config("stride must be >= 1 and horizon > 0".into()));
    }
    let observer_gains = match (&sim.observer_x0, &gains.observer) {
        (Some(_), Some(g)) if g.q1.len() == n && g.q2.len() == n => Some(g.clone()),
        (Some(_), Some(_)) => {
            return Err(Error::Shape("observer gains do not match the grid".into()))
        }
        (Some(_), None) => {
            return Err(Error::Config(
                "observer requested without observer gains".into(),
            ))
        }
        (None, _) if scenario == Scenario::OutputFeedback => {
            return Err(Error::Config(
                "output feedback needs an initial observer state".into(),
            ))
        }
        (None, _) => None,
    };
    let mut obs = match &sim.observer_x0 {
        Some(xh0) if xh0.len() != n => {
            return Err(Error::Shape("observer x0 does not match the grid".into()))
        }
        Some(xh0) => Some(ObserverState::steady_extension(xh0.clone())),
        None => None,
    };

    let dt = sim.dt.unwrap_or_else(|| default_dt(cfg, ds));
    let mut stepper = Simulator::new(cfg, coeff, dt)?;
    let steps = (sim.horizon / dt).round() as usize;
    let (h, eta) = (cfg.h, cfg.eta());

    let mut state = CascadeState::steady_extension(x0.to_vec());
    // x(1, t') = v0(1 + t'/h) for t' in [-h, 0]
    let v_initial = state.v.clone();
    let feedback = |state: &CascadeState, obs: Option<&ObserverState>, t: f64| -> f64 {
        match scenario {
            Scenario::OpenLoop => sim.input.as_ref().map_or(0.0, |s| s.eval(t)),
            Scenario::Uncompensated | Scenario::StateFeedback => {
                control_full_state(&state.x, &state.v, &state.u, &gains.control, h, eta, ds)
            }
            Scenario::OutputFeedback => {
                control_output_feedback(obs.expect("checked above"), &gains.control, h, eta, ds)
            }
        }
    };

    let mut traj = Trajectory {
        dt,
        ds,
        estimation_error: obs.as_ref().map(|_| Vec::new()),
        ..Trajectory::default()
    };
    let initial_u = feedback(&state, obs.as_ref(), 0.0);
    if let Some(o) = obs.as_mut() {
        if sim.measurement == MeasurementMode::DelayLine {
            o.boundary_history.push(state.x[n - 1]);
        }
    }
    record(&mut traj, &state, obs.as_ref(), initial_u, ds, sim)?;

    for step in 1..=steps {
        let y = state.v[0];
        stepper.step_plant(&mut state);
        state.t = step as f64 * dt;
        if let (Some(o), Some(g)) = (obs.as_mut(), observer_gains.as_ref()) {
            let delayed = match sim.measurement {
                MeasurementMode::Transport => state.v[0],
                MeasurementMode::DelayLine => {
                    o.boundary_history.push(state.x[n - 1]);
                    let back = state.t - h;
                    if back >= 0.0 {
                        interp_uniform(&o.boundary_history, 0.0, dt, back)
                    } else {
                        // before t = h the delayed boundary is the initial sensor profile
                        interp_uniform(&v_initial, 0.0, ds, 1.0 + back / h)
                    }
                }
            };
            stepper.step_observer(o, g, y, delayed);
        }
        let u_now = feedback(&state, obs.as_ref(), state.t);
        state.x[0] = u_now;
        if let Some(o) = obs.as_mut() {
            o.xh[0] = u_now;
        }
        if step % sim.stride == 0 || step == steps {
            record(&mut traj, &state, obs.as_ref(), u_now, ds, sim)?;
        }
        if let Some(every) = sim.snapshot_stride {
            if every > 0 && step % every == 0 {
                traj.snapshots.push(snapshot(&state));
            }
        }
    }
    Ok(traj)
}

fn snapshot(state: &CascadeState) -> Snapshot {
    Snapshot {
        t: state.t,
        x: state.x.clone(),
        v: state.v.clone(),
        u: state.u.clone(),
    }
}

fn record(
    traj: &mut Trajectory,
    state: &CascadeState,
    obs: Option<&ObserverState>,
    control: f64,
    ds: f64,
    sim: &SimulationConfig,
) -> Result<()> {
    let (a, b, c) = l2_all(&state.x, &state.v, &state.u, ds);
    if !(a.is_finite() && b.is_finite() && c.is_finite() && control.is_finite()) {
        return Err(Error::NonFinite {
            t: state.t,
            detail: format!("norms ({a}, {b}, {c}), control {control}"),
        });
    }
    traj.times.push(state.t);
    traj.l2_x.push(a);
    traj.l2_v.push(b);
    traj.l2_u.push(c);
    traj.control.push(control);
    if let (Some(errs), Some(o)) = (traj.estimation_error.as_mut(), obs) {
        errs.push(error_norm(state, o, ds));
    }
    if state.t == 0.0 && sim.snapshot_stride.is_some() {
        traj.snapshots.push(snapshot(state));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{eval_coefficients, CoefficientModel, SpatialGrid};

    fn zero_plant() -> (PlantConfig, CoefficientField) {
        let cfg = PlantConfig::new(1.0, 0.4, CoefficientModel::zero()).unwrap();
        let coeff = eval_coefficients(&cfg, SpatialGrid::new(0.02).unwrap());
        (cfg, coeff)
    }

    #[test]
    fn zero_is_an_equilibrium() {
        let (cfg, coeff) = zero_plant();
        let gains = GainProvider::analytic(ControlGains::zeros(51), None);
        let sim = SimulationConfig {
            horizon: 1.0,
            ..SimulationConfig::default()
        };
        let traj = run(
            Scenario::StateFeedback,
            &cfg,
            &coeff,
            &gains,
            &vec![0.0; 51],
            &sim,
        )
        .unwrap();
        assert!(traj.l2_x.iter().chain(&traj.control).all(|&v| v == 0.0));
    }

    #[test]
    fn control_law_trapezoid() {
        let mut g = ControlGains::zeros(11);
        assert_eq!(
            control_full_state(&[1.0; 11], &[1.0; 11], &[1.0; 11], &g, 0.5, 0.5, 0.1),
            0.0
        );
        g.k0 = vec![1.0; 11];
        let u = control_full_state(&[1.0; 11], &[0.0; 11], &[0.0; 11], &g, 0.5, 0.5, 0.1);
        assert!((u - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cfl_violation_rejected() {
        let (cfg, coeff) = zero_plant();
        assert!(matches!(
            Simulator::new(&cfg, &coeff, 0.05),
            Err(Error::Cfl { .. })
        ));
        assert!(Simulator::new(&cfg, &coeff, default_dt(&cfg, 0.02)).is_ok());
    }

    #[test]
    fn output_feedback_requires_observer() {
        let (cfg, coeff) = zero_plant();
        let gains = GainProvider::analytic(ControlGains::zeros(51), Some(ObserverGains::zeros(51)));
        let r = run(
            Scenario::OutputFeedback,
            &cfg,
            &coeff,
            &gains,
            &vec![0.0; 51],
            &SimulationConfig::default(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn input_signal_matches_closed_form() {
        let s = InputSignal::observer_test();
        let t = 0.37_f64;
        let expect = 5.0 * (3.0 * std::f64::consts::PI * t).sin()
            + 3.0 * (2.0 * std::f64::consts::PI * t).cos();
        assert!((s.eval(t) - expect).abs() < 1e-12);
    }

    #[test]
    fn csv_header_is_fixed() {
        let mut buf = Vec::new();
        Trajectory::default().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,l2_x,l2_v,l2_u,U\n");
    }
}
