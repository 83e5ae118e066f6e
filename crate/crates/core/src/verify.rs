//! Executable checks: backstepping transforms, kernel bounds, decay rates, gain
//! perturbations and Lipschitz probes of the kernel operators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{solve_control_kernels, ControlKernels, InverseKernels, SolverOptions};
use crate::observer::{
    solve_inverse_observer, solve_observer_kernels, InverseObserverKernels, ObserverGains,
    ObserverKernels,
};
use crate::plant::{eval_coefficients, CoefficientField, PlantConfig, SpatialGrid};
use crate::quad::{sup_norm, trapz_product};
use crate::simulator::{ControlGains, Trajectory};

/// `z = x - ∫_s^1 K x - h ∫_0^1 L(s+hr) v dr - eta ∫_0^1 J(s+eta r) u dr`.
pub fn transform_forward(x: &[f64], v: &[f64], u: &[f64], kernels: &ControlKernels) -> Vec<f64> {
    let grid = kernels.grid;
    let ds = grid.ds();
    let nodes = grid.nodes();
    let (h, eta) = (kernels.h, kernels.eta);
    (0..grid.len())
        .map(|i| {
            let s = nodes[i];
            let row = kernels.k.row(i);
            let row = row.as_slice().expect("standard layout");
            let l: Vec<f64> = nodes.iter().map(|r| kernels.l_at(s + h * r)).collect();
            let j: Vec<f64> = nodes.iter().map(|r| kernels.j_at(s + eta * r)).collect();
            x[i] - trapz_product(&row[i..], &x[i..], ds)
                - h * trapz_product(&l, v, ds)
                - eta * trapz_product(&j, u, ds)
        })
        .collect()
}

/// `x = z + ∫_s^1 B z + ∫_0^1 D v + ∫_0^1 E u`.
pub fn transform_inverse(z: &[f64], v: &[f64], u: &[f64], inv: &InverseKernels) -> Vec<f64> {
    let n = z.len();
    let ds = 1.0 / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let b = inv.b.row(i);
            let b = b.as_slice().expect("standard layout");
            let d = inv.d.row(i).to_vec();
            let e = inv.e.row(i).to_vec();
            z[i] + trapz_product(&b[i..], &z[i..], ds)
                + trapz_product(&d, v, ds)
                + trapz_product(&e, u, ds)
        })
        .collect()
}

/// Worst case of one inequality `|value| <= bound` over its sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    /// `min(bound - |value|)`; negative means violated.
    pub worst_margin: f64,
    pub violations: usize,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundsReport {
    pub checks: Vec<BoundCheck>,
}

/// Absolute slack for rounding in the pointwise comparisons.
pub const BOUND_SLACK: f64 = 1e-9;

impl BoundsReport {
    pub fn violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }

    fn push(&mut self, name: &str, pairs: impl Iterator<Item = (f64, f64)>) {
        let mut check = BoundCheck {
            name: name.to_string(),
            worst_margin: f64::INFINITY,
            violations: 0,
            points: 0,
        };
        for (value, bound) in pairs {
            let margin = bound - value.abs();
            check.points += 1;
            check.worst_margin = check.worst_margin.min(margin);
            if !(margin >= -BOUND_SLACK) {
                check.violations += 1;
            }
        }
        self.checks.push(check);
    }

    pub fn merge(&mut self, other: BoundsReport) {
        self.checks.extend(other.checks);
    }
}

/// Pointwise kernel bounds for `K`, `L`, `J` and, when given, the inverse kernels.
pub fn check_control_bounds(
    kernels: &ControlKernels,
    inverse: Option<&InverseKernels>,
    coeff: &CoefficientField,
) -> BoundsReport {
    let (c_bar, f_bar) = (coeff.c_bar(), coeff.f_bar());
    let a = c_bar + f_bar;
    let n = kernels.grid.len();
    let ds = kernels.grid.ds();
    let mut report = BoundsReport::default();
    report.push(
        "K",
        (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .map(|(i, j)| (kernels.k[[i, j]], a * (a * (j - i) as f64 * ds).exp())),
    );
    let lj_bound = c_bar * a.exp();
    report.push("L", kernels.l.iter().map(|&v| (v, lj_bound)));
    report.push("J", kernels.j.iter().map(|&v| (v, lj_bound)));
    if let Some(inv) = inverse {
        let k_norm = sup_norm(kernels.k.as_slice().expect("standard layout"));
        let growth = k_norm.exp();
        let l_norm = sup_norm(&kernels.l);
        let j_norm = sup_norm(&kernels.j);
        report.push("B", inv.b.iter().map(|&v| (v, k_norm * growth)));
        report.push("D", inv.d.iter().map(|&v| (v, kernels.h * l_norm * growth)));
        report.push(
            "E",
            inv.e.iter().map(|&v| (v, kernels.eta * j_norm * growth)),
        );
    }
    report
}

/// Pointwise observer kernel and gain bounds.
pub fn check_observer_bounds(
    obs: &ObserverKernels,
    inv: Option<&InverseObserverKernels>,
    gains: &ObserverGains,
    coeff: &CoefficientField,
) -> BoundsReport {
    let (c_bar, f_bar) = (coeff.c_bar(), coeff.f_bar());
    let h = obs.h;
    let n = obs.grid.len();
    let ds = obs.grid.ds();
    let f_cap = f_bar * f_bar.exp();
    let m_cap = h * f_bar * (f_bar * (2.0 * h + 1.0)).exp();
    let mut report = BoundsReport::default();
    report.push(
        "F",
        (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .map(|(i, j)| (obs.f[[i, j]], f_bar * (f_bar * (j - i) as f64 * ds).exp())),
    );
    report.push(
        "M",
        (0..n)
            .flat_map(|i| (0..=i).map(move |j| (i, j)))
            .map(|(i, j)| (obs.w[[i, j]], m_cap)),
    );
    report.push(
        "P",
        (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .map(|(i, j)| (obs.w[[i, j]], m_cap)),
    );
    report.push("R", obs.r.iter().map(|&v| (v, m_cap)));
    report.push("S", obs.s.iter().map(|&v| (v, c_bar * f_cap.exp())));
    report.push(
        "Q1",
        gains
            .q1
            .iter()
            .map(|&v| (v, f_bar * (f_bar * (2.0 * h + 1.0)).exp())),
    );
    report.push("Q2", gains.q2.iter().map(|&v| (v, m_cap)));
    if let Some(inv) = inv {
        report.push("F_breve", inv.f_breve.iter().map(|&v| (v, f_cap)));
        report.push("P_breve", inv.p_breve.iter().map(|&v| (v, h * f_cap)));
        report.push("R_breve", inv.r_breve.iter().map(|&v| (v, h * f_cap)));
    }
    report
}

/// Fitted exponential rate `α` of the energy `‖x‖² + ‖v‖² + ‖u‖²` on `[t0, t1]`.
///
/// The energy of a run decaying like `e^{-αt}` gives `α`; norms decaying like `e^{-t}`
/// therefore give `α = 2`.
pub fn decay_rate(traj: &Trajectory, window: (f64, f64)) -> Result<f64> {
    let energy = traj.energy();
    let mut pts = Vec::new();
    for (k, &t) in traj.times.iter().enumerate() {
        if t >= window.0 - 1e-12 && t <= window.1 + 1e-12 {
            if !(energy[k] > 0.0) {
                return Err(Error::Verification(format!(
                    "nonpositive energy {} at t = {t}",
                    energy[k]
                )));
            }
            pts.push((t, energy[k].ln()));
        }
    }
    if pts.len() < 2 {
        return Err(Error::Verification(format!(
            "decay window [{}, {}] holds {} records",
            window.0,
            window.1,
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let y_mean = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - t_mean) * (y - y_mean)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - t_mean).powi(2)).sum();
    Ok(-sxy / sxx)
}

/// Default decay window: from `tau + h + 1` to the end of the run.
pub fn default_decay_window(cfg: &PlantConfig, traj: &Trajectory) -> (f64, f64) {
    (
        cfg.tau + cfg.h + 1.0,
        traj.times.last().copied().unwrap_or(0.0),
    )
}

fn perturb(values: &mut [f64], amplitude: f64, rng: &mut impl Rng) {
    for v in values {
        *v += rng.random_range(-amplitude..=amplitude);
    }
}

/// Adds independent uniform noise in `[-amplitude, amplitude]` to every gain sample.
pub fn perturb_control_gains(
    gains: &ControlGains,
    amplitude: f64,
    rng: &mut impl Rng,
) -> ControlGains {
    let mut out = gains.clone();
    perturb(&mut out.k0, amplitude, rng);
    perturb(&mut out.l, amplitude, rng);
    perturb(&mut out.j, amplitude, rng);
    out
}

pub fn perturb_observer_gains(
    gains: &ObserverGains,
    amplitude: f64,
    rng: &mut impl Rng,
) -> ObserverGains {
    let mut out = gains.clone();
    perturb(&mut out.q1, amplitude, rng);
    perturb(&mut out.q2, amplitude, rng);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `tau + δ` with `h` fixed.
    Tau,
    /// `eta + δ` with `tau` fixed, i.e. `h - δ`.
    Eta,
    /// `h + δ` with `tau` fixed.
    H,
    /// `f + δ` on `T1`.
    F,
    /// `c + δ · 4s(1-s)`, which keeps `c(1) = 0`.
    C,
}

impl Direction {
    pub const ALL: [Direction; 5] = [
        Direction::Tau,
        Direction::Eta,
        Direction::H,
        Direction::F,
        Direction::C,
    ];

    pub fn apply(self, cfg: &PlantConfig, delta: f64) -> Result<PlantConfig> {
        match self {
            Direction::Tau => cfg.with_tau(cfg.tau + delta),
            Direction::Eta => cfg.with_h(cfg.h - delta),
            Direction::H => cfg.with_h(cfg.h + delta),
            Direction::F => cfg.with_coefficients(cfg.coefficients.clone().perturbed(delta, 0.0)),
            Direction::C => cfg.with_coefficients(cfg.coefficients.clone().perturbed(0.0, delta)),
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(Self::Tau),
            "eta" => Ok(Self::Eta),
            "h" => Ok(Self::H),
            "f" => Ok(Self::F),
            "c" => Ok(Self::C),
            other => Err(Error::Config(format!(
                "unknown perturbation direction {other:?}"
            ))),
        }
    }
}

/// Operator outputs compared by the Lipschitz probe.
#[derive(Debug, Clone)]
pub struct OperatorOutputs {
    pub k: Vec<f64>,
    pub l: Vec<f64>,
    pub j: Vec<f64>,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
}

/// Evaluates `K`, `L`, `J`, `Q1`, `Q2`, sampling `L`, `J` at the given points.
pub fn operator_outputs(
    cfg: &PlantConfig,
    grid: SpatialGrid,
    l_points: &[f64],
    j_points: &[f64],
    opts: &SolverOptions,
) -> Result<OperatorOutputs> {
    let coeff = eval_coefficients(cfg, grid);
    let kernels = solve_control_kernels(cfg, &coeff, opts)?;
    let gains = solve_observer_kernels(cfg, &coeff, opts)?.gains();
    Ok(OperatorOutputs {
        k: kernels.k.iter().copied().collect(),
        l: l_points.iter().map(|&p| kernels.l_at(p)).collect(),
        j: j_points.iter().map(|&p| kernels.j_at(p)).collect(),
        q1: gains.q1,
        q2: gains.q2,
    })
}

/// Finite-difference Lipschitz ratios `‖G(p+δ) - G(p)‖∞ / δ` of one output at two step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzRatio {
    pub output: &'static str,
    pub coarse: f64,
    pub fine: f64,
}

/// Ratios below this are treated as an output that does not depend on the direction.
pub const INSENSITIVE_RATIO: f64 = 1e-8;

impl LipschitzRatio {
    /// Both ratios within `factor` of each other, or both negligible.
    pub fn stable(&self, factor: f64) -> bool {
        if self.coarse <= INSENSITIVE_RATIO && self.fine <= INSENSITIVE_RATIO {
            return true;
        }
        let (lo, hi) = if self.coarse < self.fine {
            (self.coarse, self.fine)
        } else {
            (self.fine, self.coarse)
        };
        lo > 0.0 && hi / lo <= factor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub direction: Direction,
    pub delta: f64,
    pub ratios: Vec<LipschitzRatio>,
}

impl LipschitzReport {
    pub fn stable(&self, factor: f64) -> bool {
        self.ratios.iter().all(|r| r.stable(factor))
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Perturbs `base` along `direction` by `delta` and `delta / 10` and reports the ratios.
pub fn lipschitz_probe(
    base: &PlantConfig,
    grid: SpatialGrid,
    delta: f64,
    direction: Direction,
    opts: &SolverOptions,
) -> Result<LipschitzReport> {
    let m = grid.intervals() as f64;
    let l_points: Vec<f64> = (0..grid.len())
        .map(|k| k as f64 * (1.0 + base.h) / m)
        .collect();
    let j_points: Vec<f64> = (0..grid.len())
        .map(|k| k as f64 * (1.0 + base.eta()) / m)
        .collect();
    let reference = operator_outputs(base, grid, &l_points, &j_points, opts)?;
    let deltas = [delta, delta / 10.0];
    let mut outs = Vec::with_capacity(2);
    for d in deltas {
        let cfg = direction.apply(base, d)?;
        outs.push(operator_outputs(&cfg, grid, &l_points, &j_points, opts)?);
    }
    let ratio = |name: &'static str, pick: fn(&OperatorOutputs) -> &Vec<f64>| LipschitzRatio {
        output: name,
        coarse: sup_diff(pick(&outs[0]), pick(&reference)) / deltas[0],
        fine: sup_diff(pick(&outs[1]), pick(&reference)) / deltas[1],
    };
    Ok(LipschitzReport {
        direction,
        delta,
        ratios: vec![
            ratio("K", |o| &o.k),
            ratio("L", |o| &o.l),
            ratio("J", |o| &o.j),
            ratio("Q1", |o| &o.q1),
            ratio("Q2", |o| &o.q2),
        ],
    })
}

/// Solves every kernel of a plant and checks all bounds.
pub fn check_plant_bounds(
    cfg: &PlantConfig,
    grid: SpatialGrid,
    opts: &SolverOptions,
) -> Result<BoundsReport> {
    let coeff = eval_coefficients(cfg, grid);
    let kernels = solve_control_kernels(cfg, &coeff, opts)?;
    let inverse = crate::kernel::solve_inverse(&kernels, opts)?;
    let obs = solve_observer_kernels(cfg, &coeff, opts)?;
    let inv_obs = solve_inverse_observer(cfg, &coeff, opts)?;
    let gains = obs.gains();
    let mut report = check_control_bounds(&kernels, Some(&inverse), &coeff);
    report.merge(check_observer_bounds(&obs, Some(&inv_obs), &gains, &coeff));
    Ok(report)
}
