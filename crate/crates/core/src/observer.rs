//! Observer kernels and output-injection gains.
//!
//! `F` solves
//!
//! ```text
//! F_s + F_q = ∫_s^q f(s,r) F(r,q) dr - f(s,q),   F(0,q) = 0
//! ```
//!
//! on `T1`, and the inverse kernel `F̆` solves the same equation with the integral negated.
//! `M` (on `q <= s`) and `P` (on `s <= q`) are handled as a single field `W` on the
//! unit square, because their equations combine into
//!
//! ```text
//! h W_s - W_q = h ∫_s^1 f(s,r) W(r,q) dr,   W(0,q) = 0,   W(s,1) = h F(s,1),
//! ```
//!
//! which makes the seam `M(s,s) = P(s,s)` hold by construction. `W` is marched
//! in decreasing `q` along its characteristics `ds/dq = -h`, using a level spacing
//! `Δq = Δs / h` that lands every characteristic foot on a grid node.

use ndarray::Array2;

use crate::error::Result;
use crate::kernel::{iterate, triangular_convolution, Convergence, SolverOptions};
use crate::plant::{CoefficientField, PlantConfig, SpatialGrid};
use crate::quad::{interp_uniform, trapz_product};

/// Direct observer kernels on the grid.
#[derive(Debug, Clone)]
pub struct ObserverKernels {
    pub grid: SpatialGrid,
    pub h: f64,
    /// `F(s_i, q_j)` on `i <= j`.
    pub f: Array2<f64>,
    /// `W(s_i, q_j)`: `M` where `j <= i`, `P` where `i <= j`.
    pub w: Array2<f64>,
    /// `R(ξ_j) = M(1, 1 - ξ_j)`.
    pub r: Vec<f64>,
    /// `S(s) = c(s) + ∫_s^1 F(s,q) S(q) dq`.
    pub s: Vec<f64>,
    pub convergence: Convergence,
}

impl ObserverKernels {
    /// `M` on `T3`, zero above the diagonal.
    pub fn m(&self) -> Array2<f64> {
        let mut m = self.w.clone();
        for ((i, j), v) in m.indexed_iter_mut() {
            if j > i {
                *v = 0.0;
            }
        }
        m
    }

    /// `P` on `T1`, zero below the diagonal.
    pub fn p(&self) -> Array2<f64> {
        let mut p = self.w.clone();
        for ((i, j), v) in p.indexed_iter_mut() {
            if j < i {
                *v = 0.0;
            }
        }
        p
    }

    pub fn gains(&self) -> ObserverGains {
        gains_from_kernels(&self.w, self.h)
    }
}

/// Inverse observer kernels.
#[derive(Debug, Clone)]
pub struct InverseObserverKernels {
    pub grid: SpatialGrid,
    pub h: f64,
    /// `F̆(s_i, q_j)` on `i <= j`.
    pub f_breve: Array2<f64>,
    /// `P̆` at `m (1 + h) / (n - 1)`.
    pub p_breve: Vec<f64>,
    /// `R̆(ζ_j) = P̆(1 + h (1 - ζ_j))`.
    pub r_breve: Vec<f64>,
}

impl InverseObserverKernels {
    /// `P̆(ς) = h F̆(ς - h, 1)` for `ς > h`, else 0.
    pub fn p_breve_at(&self, varsigma: f64) -> f64 {
        p_breve_from(&self.f_breve, self.grid, self.h, varsigma)
    }

    pub fn p_breve_step(&self) -> f64 {
        (1.0 + self.h) / self.grid.intervals() as f64
    }
}

fn p_breve_from(f_breve: &Array2<f64>, grid: SpatialGrid, h: f64, varsigma: f64) -> f64 {
    if varsigma <= h {
        return 0.0;
    }
    let last = grid.len() - 1;
    let column: Vec<f64> = f_breve.column(last).to_vec();
    h * interp_uniform(&column, 0.0, grid.ds(), varsigma - h)
}

/// Output-injection gains on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGains {
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
}

impl ObserverGains {
    pub fn zeros(n: usize) -> Self {
        Self {
            q1: vec![0.0; n],
            q2: vec![0.0; n],
        }
    }
}

/// `Q1(s) = -M(s,0)/h`, `Q2(s) = -M(1, 1-s)` from the merged field on the grid.
pub fn gains_from_kernels(w: &Array2<f64>, h: f64) -> ObserverGains {
    let n = w.nrows();
    let last = n - 1;
    ObserverGains {
        q1: (0..n).map(|i| -w[[i, 0]] / h).collect(),
        q2: (0..n).map(|j| -w[[last, last - j]]).collect(),
    }
}

/// Marches `F_s + F_q = sign ∫ f F - f` from `F(0,q) = 0` by successive approximation.
fn solve_f_like(
    coeff: &CoefficientField,
    sign: f64,
    what: &'static str,
    opts: &SolverOptions,
) -> Result<(Array2<f64>, Convergence)> {
    let n = coeff.grid().len();
    let ds = coeff.grid().ds();
    let mut f_kernel = Array2::zeros((n, n));
    let mut conv = Array2::zeros((n, n));
    let mut rhs = Array2::<f64>::zeros((n, n));
    let convergence = iterate(what, opts, || {
        triangular_convolution(&coeff.f, &f_kernel, ds, &mut conv);
        for i in 0..n {
            for j in i..n {
                rhs[[i, j]] = sign * conv[[i, j]] - coeff.f[[i, j]];
            }
        }
        let mut change = 0.0_f64;
        for d in 0..n {
            let mut prev = 0.0;
            for i in 1..(n - d) {
                let next = prev + 0.5 * ds * (rhs[[i - 1, i - 1 + d]] + rhs[[i, i + d]]);
                change = change.max((f_kernel[[i, i + d]] - next).abs());
                f_kernel[[i, i + d]] = next;
                prev = next;
            }
        }
        change
    })?;
    Ok((f_kernel, convergence))
}

pub fn solve_f(
    coeff: &CoefficientField,
    opts: &SolverOptions,
) -> Result<(Array2<f64>, Convergence)> {
    solve_f_like(coeff, 1.0, "observer kernel F", opts)
}

pub fn solve_f_breve(
    coeff: &CoefficientField,
    opts: &SolverOptions,
) -> Result<(Array2<f64>, Convergence)> {
    solve_f_like(coeff, -1.0, "inverse observer kernel F̆", opts)
}

/// `S = c + ∫_s^1 F S` by successive approximation.
pub fn solve_s(
    coeff: &CoefficientField,
    f_kernel: &Array2<f64>,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    let n = coeff.grid().len();
    let ds = coeff.grid().ds();
    let mut s = coeff.c.clone();
    iterate("auxiliary function S", opts, || {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let row = f_kernel.row(i);
                let row = row.as_slice().expect("standard layout");
                coeff.c[i] + trapz_product(&row[i..], &s[i..], ds)
            })
            .collect();
        let change = next
            .iter()
            .zip(&s)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        s = next;
        change
    })?;
    Ok(s)
}

/// One implicit level of the `W` march.
///
/// Solves `W_i = base_i + half * I_i(W)` for `i >= 1` with `W_0 = 0`, where
/// `I_i(W) = ∫_{s_i}^1 f(s_i,r) W(r) dr`; the system is upper triangular.
fn implicit_level(f: &Array2<f64>, base: &[f64], half: f64, ds: f64, out: &mut [f64]) {
    let n = base.len();
    let last = n - 1;
    out[last] = base[last];
    for i in (1..last).rev() {
        let row = f.row(i);
        let row = row.as_slice().expect("standard layout");
        let mut rest = 0.5 * row[last] * out[last];
        for j in (i + 1)..last {
            rest += row[j] * out[j];
        }
        let diag = 0.5 * row[i] * ds;
        out[i] = (base[i] + half * ds * rest) / (1.0 - half * diag);
    }
    out[0] = 0.0;
}

fn row_integrals(f: &Array2<f64>, w: &[f64], ds: f64, out: &mut [f64]) {
    let n = w.len();
    for i in 0..n {
        let row = f.row(i);
        let row = row.as_slice().expect("standard layout");
        out[i] = trapz_product(&row[i..], &w[i..], ds);
    }
}

/// Marches `W` from `q = 1` down to `q = 0`, returning the field on grid columns.
pub(crate) fn march_w(coeff: &CoefficientField, f_kernel: &Array2<f64>, h: f64) -> Array2<f64> {
    let grid = coeff.grid();
    let n = grid.len();
    let last = n - 1;
    let ds = grid.ds();
    let dq = ds / h;

    let mut levels_q = vec![1.0];
    let mut levels: Vec<Vec<f64>> = vec![(0..n).map(|i| h * f_kernel[[i, last]]).collect()];
    let mut integrals = vec![0.0; n];
    let mut base = vec![0.0; n];

    loop {
        let q_now = *levels_q.last().expect("nonempty");
        if q_now <= 0.0 {
            break;
        }
        let prev = levels.last().expect("nonempty");
        row_integrals(&coeff.f, prev, ds, &mut integrals);
        let mut next = vec![0.0; n];
        let q_next = q_now - dq;
        if q_next > 1e-12 * dq {
            let half = 0.5 * ds;
            for i in 1..n {
                base[i] = prev[i - 1] + half * integrals[i - 1];
            }
            implicit_level(&coeff.f, &base, half, ds, &mut next);
            levels_q.push(q_next);
        } else {
            // partial step landing on q = 0; the characteristic foot sits between nodes
            let theta = q_now / dq;
            let half = 0.5 * theta * ds;
            for i in 1..n {
                let foot = grid.node(i) - theta * ds;
                let w_foot = interp_uniform(prev, 0.0, ds, foot);
                let i_foot = interp_uniform(&integrals, 0.0, ds, foot);
                base[i] = w_foot + half * i_foot;
            }
            implicit_level(&coeff.f, &base, half, ds, &mut next);
            levels_q.push(0.0);
        }
        levels.push(next);
    }

    // resample levels onto the grid columns q_j = j ds (levels are in decreasing q)
    let mut w = Array2::zeros((n, n));
    let mut k = 0;
    for j in (0..n).rev() {
        let q = grid.node(j);
        while k + 1 < levels_q.len() - 1 && levels_q[k + 1] > q {
            k += 1;
        }
        let (qa, qb) = (levels_q[k], levels_q[k + 1]);
        let theta = if qa == qb { 0.0 } else { (qa - q) / (qa - qb) };
        for i in 0..n {
            w[[i, j]] = if theta == 0.0 {
                levels[k][i]
            } else if theta == 1.0 {
                levels[k + 1][i]
            } else {
                (1.0 - theta) * levels[k][i] + theta * levels[k + 1][i]
            };
        }
    }
    w
}

/// Solves `F`, `M`, `P`, `R`, `S`.
pub fn solve_observer_kernels(
    cfg: &PlantConfig,
    coeff: &CoefficientField,
    opts: &SolverOptions,
) -> Result<ObserverKernels> {
    let grid = coeff.grid();
    let (f_kernel, convergence) = solve_f(coeff, opts)?;
    let w = march_w(coeff, &f_kernel, cfg.h);
    let last = grid.len() - 1;
    let r = (0..grid.len()).map(|j| w[[last, last - j]]).collect();
    let s = solve_s(coeff, &f_kernel, opts)?;
    Ok(ObserverKernels {
        grid,
        h: cfg.h,
        f: f_kernel,
        w,
        r,
        s,
        convergence,
    })
}

/// Solves `F̆`, `P̆`, `R̆`.
pub fn solve_inverse_observer(
    cfg: &PlantConfig,
    coeff: &CoefficientField,
    opts: &SolverOptions,
) -> Result<InverseObserverKernels> {
    let grid = coeff.grid();
    let (f_breve, _) = solve_f_breve(coeff, opts)?;
    let h = cfg.h;
    let m = grid.intervals() as f64;
    let p_breve = (0..grid.len())
        .map(|k| p_breve_from(&f_breve, grid, h, k as f64 * (1.0 + h) / m))
        .collect();
    let r_breve = grid
        .nodes()
        .iter()
        .map(|zeta| p_breve_from(&f_breve, grid, h, 1.0 + h * (1.0 - zeta)))
        .collect();
    Ok(InverseObserverKernels {
        grid,
        h,
        f_breve,
        p_breve,
        r_breve,
    })
}

/// Observer gains for a plant.
pub fn observer_gains(
    cfg: &PlantConfig,
    coeff: &CoefficientField,
    opts: &SolverOptions,
) -> Result<ObserverGains> {
    Ok(solve_observer_kernels(cfg, coeff, opts)?.gains())
}

/// Four-point Lagrange interpolation of uniform samples, clamped to the sampled range.
fn cubic_uniform(values: &[f64], step: f64, x: f64) -> f64 {
    let n = values.len();
    let pos = (x / step).clamp(0.0, (n - 1) as f64);
    let k = pos.floor() as usize;
    let w = pos - k as f64;
    if w == 0.0 {
        return values[k];
    }
    let start = k.saturating_sub(1).min(n.saturating_sub(4));
    let t = pos - start as f64;
    let mut acc = 0.0;
    for a in 0..4.min(n) {
        let mut basis = 1.0;
        for b in 0..4.min(n) {
            if a != b {
                basis *= (t - b as f64) / (a as f64 - b as f64);
            }
        }
        acc += basis * values[start + a];
    }
    acc
}

/// Independent computation of the observer gains.
///
/// `F` is marched column by column in `q` with a Heun step along each diagonal; `W` is
/// advanced on levels `Δq = Δs` with cubic interpolation at the characteristic feet and
/// `sweeps` trapezoid corrections per level.
pub fn observer_gains_characteristics(
    cfg: &PlantConfig,
    coeff: &CoefficientField,
    sweeps: usize,
) -> ObserverGains {
    let grid = coeff.grid();
    let n = grid.len();
    let last = n - 1;
    let ds = grid.ds();
    let h = cfg.h;
    let f = &coeff.f;

    // F column by column: F(i+1, j+1) from F(i, j)
    let mut fk = Array2::<f64>::zeros((n, n));
    let column_rhs = |fk: &Array2<f64>, j: usize, i: usize| -> f64 {
        let mut acc = 0.0;
        if j > i {
            for r in i..=j {
                let w = if r == i || r == j { 0.5 } else { 1.0 };
                acc += w * f[[i, r]] * fk[[r, j]];
            }
        }
        ds * acc - f[[i, j]]
    };
    for j in 0..last {
        let prev: Vec<f64> = (0..=j).map(|i| column_rhs(&fk, j, i)).collect();
        for i in 0..=j {
            fk[[i + 1, j + 1]] = fk[[i, j]] + ds * prev[i];
        }
        for _ in 0..sweeps {
            let cur: Vec<f64> = (0..=j + 1).map(|i| column_rhs(&fk, j + 1, i)).collect();
            for i in 0..=j {
                fk[[i + 1, j + 1]] = fk[[i, j]] + 0.5 * ds * (prev[i] + cur[i + 1]);
            }
        }
    }

    let integrals = |w: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let row = f.row(i);
                let row = row.as_slice().expect("standard layout");
                trapz_product(&row[i..], &w[i..], ds)
            })
            .collect()
    };

    // W on levels q_k = 1 - k Δs
    let mut levels: Vec<Vec<f64>> = vec![(0..n).map(|i| h * fk[[i, last]]).collect()];
    let shift = h * ds;
    for _ in 0..last {
        let prev = levels.last().expect("nonempty");
        let i_prev = integrals(prev);
        let feet: Vec<Option<(f64, f64)>> = grid
            .nodes()
            .iter()
            .map(|&s| {
                let foot = s - shift;
                (foot >= 0.0).then(|| {
                    (
                        cubic_uniform(prev, ds, foot),
                        cubic_uniform(&i_prev, ds, foot),
                    )
                })
            })
            .collect();
        let mut next = vec![0.0; n];
        for (i, foot) in feet.iter().enumerate() {
            if let Some((w_foot, i_foot)) = foot {
                next[i] = w_foot + shift * i_foot;
            }
        }
        next[0] = 0.0;
        for _ in 0..sweeps.max(1) {
            let i_next = integrals(&next);
            let mut corrected = vec![0.0; n];
            for i in 1..n {
                let s = grid.node(i);
                corrected[i] = match feet[i] {
                    Some((w_foot, i_foot)) => w_foot + 0.5 * shift * (i_foot + i_next[i]),
                    None => {
                        // the characteristic leaves s = 0 inside this level, where W = 0
                        let frac = s / shift;
                        let i_start = (1.0 - frac) * i_next[0] + frac * i_prev[0];
                        0.5 * s * (i_start + i_next[i])
                    }
                };
            }
            next = corrected;
        }
        levels.push(next);
    }
    ObserverGains {
        q1: (0..n).map(|i| -levels[last][i] / h).collect(),
        q2: (0..n).map(|j| -levels[j][last]).collect(),
    }
}
