//! Control kernels `K`, `L`, `J` and the inverse kernels `B`, `D`, `E`.
//!
//! `K` solves, on `T1 = {0 <= s <= q <= 1}`,
//!
//! ```text
//! K_s + K_q = f(s,q) - ∫_s^q K(s,r) f(r,q) dr,
//! K(s,1)    = J(s + tau)  (zero once s + tau >= 1),
//! J(σ)      = ∫_σ^1 K(σ,q) c(q) dq - c(σ)  for σ < 1, else 0,
//! L(φ)      = J(φ + eta)  for φ < 1, else 0.
//! ```
//!
//! Integrating along the characteristics `q - s = const` gives a fixed-point problem
//! that is solved by successive approximation. Each sweep evaluates the inner
//! integral `G(s,q) = ∫_s^q K(s,r) f(r,q) dr` once, then accumulates `f - G` along
//! every diagonal from the boundary `q = 1` with the trapezoid rule.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{CoefficientField, CoefficientModel, PlantConfig, SpatialGrid};
use crate::quad::{interp_uniform, trapz_product};

/// Stopping rule for the successive-approximation solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Sup-norm change between iterates at which the iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Run exactly this many sweeps, ignoring `tol`.
    pub fixed_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            fixed_iterations: None,
        }
    }
}

impl SolverOptions {
    pub fn fixed(iterations: usize) -> Self {
        Self {
            fixed_iterations: Some(iterations),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config(format!(
                "solver needs tol > 0 and max_iter >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Outcome of a fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub iterations: usize,
    pub change: f64,
}

/// Runs `sweep` until the returned sup-change drops below `tol`.
pub(crate) fn iterate(
    what: &'static str,
    opts: &SolverOptions,
    mut sweep: impl FnMut() -> f64,
) -> Result<Convergence> {
    opts.validate()?;
    if let Some(n) = opts.fixed_iterations {
        let mut change = f64::INFINITY;
        for _ in 0..n {
            change = sweep();
        }
        return Ok(Convergence {
            iterations: n,
            change,
        });
    }
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        change = sweep();
        if !change.is_finite() {
            break;
        }
        if change <= opts.tol {
            return Ok(Convergence {
                iterations: it,
                change,
            });
        }
    }
    Err(Error::NonConvergence {
        what,
        iterations: opts.max_iter,
        change,
    })
}

/// Evaluates `J(σ)` off the grid from the row integrals `∫_{s_i}^1 K(s_i,q) c(q) dq`.
///
/// The row integral is interpolated linearly between grid rows; `c(σ)` uses the closed form.
#[derive(Debug, Clone)]
pub struct JEvaluator {
    grid: SpatialGrid,
    row_integrals: Vec<f64>,
    model: CoefficientModel,
}

impl JEvaluator {
    pub fn new(k: &Array2<f64>, coeff: &CoefficientField) -> Self {
        let mut ev = Self {
            grid: coeff.grid(),
            row_integrals: vec![0.0; coeff.grid().len()],
            model: coeff.model().clone(),
        };
        ev.update(k, &coeff.c);
        ev
    }

    fn update(&mut self, k: &Array2<f64>, c: &[f64]) {
        let n = self.grid.len();
        let ds = self.grid.ds();
        for i in 0..n {
            let row = k.row(i);
            let row = row.as_slice().expect("standard layout");
            self.row_integrals[i] = trapz_product(&row[i..], &c[i..], ds);
        }
    }

    pub fn j_at(&self, sigma: f64) -> f64 {
        if sigma >= 1.0 {
            0.0
        } else {
            interp_uniform(&self.row_integrals, 0.0, self.grid.ds(), sigma) - self.model.c(sigma)
        }
    }

    pub fn row_integrals(&self) -> &[f64] {
        &self.row_integrals
    }
}

/// Direct kernels on their domains, plus the evaluator used for off-grid `L`, `J`.
#[derive(Debug, Clone)]
pub struct ControlKernels {
    pub grid: SpatialGrid,
    pub tau: f64,
    pub h: f64,
    pub eta: f64,
    /// `k[[i, j]] = K(s_i, q_j)` on `i <= j`, zero below the diagonal.
    pub k: Array2<f64>,
    /// `L` at `m (1 + h) / (n - 1)`, `m = 0..n`.
    pub l: Vec<f64>,
    /// `J` at `m (1 + eta) / (n - 1)`, `m = 0..n`.
    pub j: Vec<f64>,
    pub convergence: Convergence,
    evaluator: JEvaluator,
}

impl ControlKernels {
    pub fn j_at(&self, sigma: f64) -> f64 {
        self.evaluator.j_at(sigma)
    }

    pub fn l_at(&self, phi: f64) -> f64 {
        if phi >= 1.0 {
            0.0
        } else {
            self.evaluator.j_at(phi + self.eta)
        }
    }

    pub fn l_step(&self) -> f64 {
        (1.0 + self.h) / self.grid.intervals() as f64
    }

    pub fn j_step(&self) -> f64 {
        (1.0 + self.eta) / self.grid.intervals() as f64
    }

    /// `K(0, q_j)`.
    pub fn k0(&self) -> Vec<f64> {
        self.k.row(0).to_vec()
    }

    /// `L(h r_j)` on the grid nodes `r_j`.
    pub fn l_gain(&self) -> Vec<f64> {
        self.grid
            .nodes()
            .iter()
            .map(|r| self.l_at(self.h * r))
            .collect()
    }

    /// `J(eta r_j)` on the grid nodes `r_j`.
    pub fn j_gain(&self) -> Vec<f64> {
        self.grid
            .nodes()
            .iter()
            .map(|r| self.j_at(self.eta * r))
            .collect()
    }

    pub fn evaluator(&self) -> &JEvaluator {
        &self.evaluator
    }
}

/// Result of [`solve_k`].
#[derive(Debug, Clone)]
pub struct KSolution {
    pub k: Array2<f64>,
    pub convergence: Convergence,
}

/// `G[[i, j]] = ∫_{s_i}^{q_j} a(s_i, r) b(r, q_j) dr` for `i <= j`, trapezoid rule.
///
/// Both factors are upper-triangular grid fields.
pub(crate) fn triangular_convolution(
    a: &Array2<f64>,
    b: &Array2<f64>,
    ds: f64,
    out: &mut Array2<f64>,
) {
    let n = a.nrows();
    let a_s = a.as_slice().expect("standard layout");
    let b_s = b.as_slice().expect("standard layout");
    let out_s = out.as_slice_mut().expect("standard layout");
    for i in 0..n {
        let acc = &mut out_s[i * n..(i + 1) * n];
        acc.iter_mut().for_each(|v| *v = 0.0);
        for r in i..n {
            let w = a_s[i * n + r];
            if w == 0.0 {
                continue;
            }
            let brow = &b_s[r * n..(r + 1) * n];
            for j in r..n {
                acc[j] += w * brow[j];
            }
        }
        let a_ii = a_s[i * n + i];
        for j in i..n {
            // drop half of each end term of the sum over r = i..=j
            let ends = 0.5 * (a_ii * b_s[i * n + j] + a_s[i * n + j] * b_s[j * n + j]);
            acc[j] = ds * (acc[j] - ends);
        }
        for v in acc[..i].iter_mut() {
            *v = 0.0;
        }
    }
}

/// Accumulates `-∫ rhs` along each diagonal from the boundary value at `q = 1`.
fn march_from_boundary(rhs: &Array2<f64>, boundary: &[f64], ds: f64, k: &mut Array2<f64>) -> f64 {
    let n = rhs.nrows();
    let last = n - 1;
    let mut change = 0.0_f64;
    for d in 0..n {
        let end = last - d;
        let mut prev = boundary[end];
        change = change.max((k[[end, last]] - prev).abs());
        k[[end, last]] = prev;
        for i in (0..end).rev() {
            let next = prev - 0.5 * ds * (rhs[[i, i + d]] + rhs[[i + 1, i + 1 + d]]);
            change = change.max((k[[i, i + d]] - next).abs());
            k[[i, i + d]] = next;
            prev = next;
        }
    }
    change
}

/// Solves for `K` by successive approximation of the characteristic integral form.
///
/// `tau == 0` is accepted and yields the delay-free kernel.
pub fn solve_k(coeff: &CoefficientField, tau: f64, opts: &SolverOptions) -> Result<KSolution> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidPlant(format!(
            "tau must be nonnegative, got {tau}"
        )));
    }
    let grid = coeff.grid();
    let n = grid.len();
    let ds = grid.ds();
    let nodes = grid.nodes();
    let mut k = Array2::zeros((n, n));
    let mut conv = Array2::zeros((n, n));
    let mut rhs = Array2::zeros((n, n));
    let mut boundary = vec![0.0; n];
    let mut evaluator = JEvaluator {
        grid,
        row_integrals: vec![0.0; n],
        model: coeff.model().clone(),
    };
    let active: Vec<bool> = nodes.iter().map(|s| s + tau < 1.0).collect();

    let convergence = iterate("control kernel K", opts, || {
        triangular_convolution(&k, &coeff.f, ds, &mut conv);
        for i in 0..n {
            for j in i..n {
                rhs[[i, j]] = coeff.f[[i, j]] - conv[[i, j]];
            }
        }
        evaluator.update(&k, &coeff.c);
        for p in 0..n {
            boundary[p] = if active[p] {
                evaluator.j_at(nodes[p] + tau)
            } else {
                0.0
            };
        }
        march_from_boundary(&rhs, &boundary, ds, &mut k)
    })?;
    Ok(KSolution { k, convergence })
}

/// `J` on `[0, 1 + eta]` and `L` on `[0, 1 + h]`, each on `n` uniform points.
pub fn derive_j_and_l(
    k: &Array2<f64>,
    coeff: &CoefficientField,
    h: f64,
    eta: f64,
) -> (Vec<f64>, Vec<f64>) {
    let ev = JEvaluator::new(k, coeff);
    let grid = coeff.grid();
    let m = grid.intervals() as f64;
    let j = (0..grid.len())
        .map(|idx| ev.j_at(idx as f64 * (1.0 + eta) / m))
        .collect();
    let l = (0..grid.len())
        .map(|idx| {
            let phi = idx as f64 * (1.0 + h) / m;
            if phi < 1.0 {
                ev.j_at(phi + eta)
            } else {
                0.0
            }
        })
        .collect();
    (j, l)
}

/// Solves `K` and derives `L`, `J` for a plant.
pub fn solve_control_kernels(
    cfg: &PlantConfig,
    coeff: &CoefficientField,
    opts: &SolverOptions,
) -> Result<ControlKernels> {
    let sol = solve_k(coeff, cfg.tau, opts)?;
    let (j, l) = derive_j_and_l(&sol.k, coeff, cfg.h, cfg.eta());
    let evaluator = JEvaluator::new(&sol.k, coeff);
    Ok(ControlKernels {
        grid: coeff.grid(),
        tau: cfg.tau,
        h: cfg.h,
        eta: cfg.eta(),
        k: sol.k,
        l,
        j,
        convergence: sol.convergence,
        evaluator,
    })
}

/// Independent solver for `K`: row-by-row march from `s = 1` with a Heun predictor and
/// `corrector_sweeps` trapezoid corrections along each characteristic.
///
/// Slower than [`solve_k`] and kept as a cross-check.
pub fn solve_k_characteristics(
    coeff: &CoefficientField,
    tau: f64,
    corrector_sweeps: usize,
) -> Result<Array2<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidPlant(format!(
            "tau must be nonnegative, got {tau}"
        )));
    }
    let grid = coeff.grid();
    let n = grid.len();
    let last = n - 1;
    let ds = grid.ds();
    let f = &coeff.f;
    let model = coeff.model();
    let mut k = Array2::<f64>::zeros((n, n));
    // row integrals ∫_{s_i}^1 K(s_i,q) c(q) dq of finished rows
    let mut integrals = vec![0.0; n];

    let rhs_row = |k: &Array2<f64>, i: usize, out: &mut Vec<f64>| {
        out.clear();
        out.resize(n, 0.0);
        for j in i..n {
            let mut acc = 0.0;
            for r in i..=j {
                let w = if r == i || r == j { 0.5 } else { 1.0 };
                acc += w * k[[i, r]] * f[[r, j]];
            }
            out[j] = f[[i, j]] - if j > i { ds * acc } else { 0.0 };
        }
    };
    let boundary = |integrals: &[f64], s: f64| -> f64 {
        let sigma = s + tau;
        if sigma >= 1.0 {
            0.0
        } else {
            interp_uniform(integrals, 0.0, ds, sigma) - model.c(sigma)
        }
    };

    let mut below = Vec::new();
    let mut current = Vec::new();
    k[[last, last]] = boundary(&integrals, 1.0);
    for i in (0..last).rev() {
        rhs_row(&k, i + 1, &mut below);
        // predictor: explicit Euler along each diagonal
        for j in i..last {
            k[[i, j]] = k[[i + 1, j + 1]] - ds * below[j + 1];
        }
        for sweep in 0..=corrector_sweeps {
            let row = k.row(i).to_vec();
            integrals[i] = trapz_product(&row[i..], &coeff.c[i..], ds);
            k[[i, last]] = boundary(&integrals, grid.node(i));
            if sweep == corrector_sweeps {
                break;
            }
            rhs_row(&k, i, &mut current);
            for j in i..last {
                k[[i, j]] = k[[i + 1, j + 1]] - 0.5 * ds * (current[j] + below[j + 1]);
            }
        }
        let row = k.row(i).to_vec();
        integrals[i] = trapz_product(&row[i..], &coeff.c[i..], ds);
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            t: 0.0,
            detail: "characteristic march produced non-finite kernel values".into(),
        });
    }
    Ok(k)
}

/// Inverse transformation kernels: `B` on `T1`, `D` and `E` on `[0,1]^2`.
#[derive(Debug, Clone)]
pub struct InverseKernels {
    pub b: Array2<f64>,
    pub d: Array2<f64>,
    pub e: Array2<f64>,
}

fn full_row_convolution(k: &Array2<f64>, x: &Array2<f64>, ds: f64, out: &mut Array2<f64>) {
    // out[i][j] = ∫_{s_i}^1 K(s_i,a) X(a, r_j) da
    let n = k.nrows();
    let last = n - 1;
    for i in 0..n {
        let mut acc = vec![0.0; n];
        for a in i..n {
            let mut w = k[[i, a]];
            if a == i || a == last {
                w *= 0.5;
            }
            if i == last {
                w = 0.0;
            }
            if w == 0.0 {
                continue;
            }
            let xrow = x.row(a);
            for (v, xv) in acc.iter_mut().zip(xrow.iter()) {
                *v += w * xv;
            }
        }
        for (j, v) in acc.into_iter().enumerate() {
            out[[i, j]] = ds * v;
        }
    }
}

/// Solves the Volterra relations between direct and inverse kernels by successive approximation:
///
/// ```text
/// B(s,q) = K(s,q) + ∫_s^q K(s,a) B(a,q) da
/// D(s,r) = h L(s + h r) + ∫_s^1 K(s,a) D(a,r) da
/// E(s,r) = eta J(s + eta r) + ∫_s^1 K(s,a) E(a,r) da
/// ```
pub fn solve_inverse(kernels: &ControlKernels, opts: &SolverOptions) -> Result<InverseKernels> {
    let grid = kernels.grid;
    let n = grid.len();
    let ds = grid.ds();
    let nodes = grid.nodes();
    let (h, eta) = (kernels.h, kernels.eta);

    let mut d_force = Array2::zeros((n, n));
    let mut e_force = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            d_force[[i, j]] = h * kernels.l_at(nodes[i] + h * nodes[j]);
            e_force[[i, j]] = eta * kernels.j_at(nodes[i] + eta * nodes[j]);
        }
    }

    let k = &kernels.k;
    let mut b = Array2::zeros((n, n));
    let mut tmp = Array2::zeros((n, n));
    iterate("inverse kernel B", opts, || {
        triangular_convolution(k, &b, ds, &mut tmp);
        let mut change = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                let next = k[[i, j]] + tmp[[i, j]];
                change = change.max((next - b[[i, j]]).abs());
                b[[i, j]] = next;
            }
        }
        change
    })?;

    let solve_full = |force: &Array2<f64>, what: &'static str| -> Result<Array2<f64>> {
        let mut x = force.clone();
        let mut tmp = Array2::zeros((n, n));
        iterate(what, opts, || {
            full_row_convolution(k, &x, ds, &mut tmp);
            let mut change = 0.0_f64;
            for ((xv, fv), tv) in x.iter_mut().zip(force.iter()).zip(tmp.iter()) {
                let next = fv + tv;
                change = change.max((next - *xv).abs());
                *xv = next;
            }
            change
        })?;
        Ok(x)
    };
    let d = solve_full(&d_force, "inverse kernel D")?;
    let e = solve_full(&e_force, "inverse kernel E")?;
    Ok(InverseKernels { b, d, e })
}

/// Components of the kernel-equation residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelResidual {
    /// `sup |K_s + K_q - f + ∫ K f|` with one-sided differences along the characteristics.
    pub interior: f64,
    /// `sup_s |K(s,1) - J(s + tau)|`.
    pub boundary: f64,
}

impl KernelResidual {
    pub fn sup(&self) -> f64 {
        self.interior.max(self.boundary)
    }
}

pub fn kernel_residual(k: &Array2<f64>, coeff: &CoefficientField, tau: f64) -> KernelResidual {
    let grid = coeff.grid();
    let n = grid.len();
    let last = n - 1;
    let ds = grid.ds();
    let mut conv = Array2::zeros((n, n));
    triangular_convolution(k, &coeff.f, ds, &mut conv);
    let rhs = |i: usize, j: usize| coeff.f[[i, j]] - conv[[i, j]];

    let mut interior = 0.0_f64;
    for d in 0..n {
        for i in 0..=(last - d) {
            let j = i + d;
            let r = if j < last {
                (k[[i + 1, j + 1]] - k[[i, j]]) / ds - rhs(i, j)
            } else if i >= 1 {
                (k[[i, j]] - k[[i - 1, j - 1]]) / ds - rhs(i, j)
            } else {
                continue;
            };
            interior = interior.max(r.abs());
        }
    }

    let ev = JEvaluator::new(k, coeff);
    let boundary = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(p, s)| {
            let target = if s + tau < 1.0 { ev.j_at(s + tau) } else { 0.0 };
            (k[[p, last]] - target).abs()
        })
        .fold(0.0_f64, f64::max);
    KernelResidual { interior, boundary }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{eval_model, CoefficientModel};

    fn field(model: CoefficientModel, ds: f64) -> CoefficientField {
        eval_model(&model, SpatialGrid::new(ds).unwrap())
    }

    #[test]
    fn zero_coefficients_give_zero_kernel() {
        let coeff = field(CoefficientModel::zero(), 0.05);
        let sol = solve_k(&coeff, 0.7, &SolverOptions::default()).unwrap();
        assert!(sol.k.iter().all(|&v| v == 0.0));
        let (j, l) = derive_j_and_l(&sol.k, &coeff, 0.3, 0.4);
        assert!(j.iter().chain(&l).all(|&v| v == 0.0));
    }

    #[test]
    fn long_recycle_delay_zeroes_the_boundary() {
        let coeff = field(CoefficientModel::chebyshev(4.0, 3.5, 5.0, 9.0), 0.02);
        let sol = solve_k(&coeff, 1.5, &SolverOptions::default()).unwrap();
        for i in 0..51 {
            assert_eq!(sol.k[[i, 50]], 0.0);
        }
        assert!(sol.k.iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn j_is_continuous_at_one() {
        let cfg = PlantConfig::reference();
        let coeff = field(cfg.coefficients.clone(), 0.02);
        let kernels = solve_control_kernels(&cfg, &coeff, &SolverOptions::default()).unwrap();
        let left = kernels.j_at(1.0 - 1e-9);
        assert!(left.abs() < 1e-6, "J(1-) = {left}");
        assert_eq!(kernels.j_at(1.0), 0.0);
        assert_eq!(kernels.l_at(1.0), 0.0);
    }

    #[test]
    fn boundary_matches_shifted_j_for_short_delay() {
        let cfg =
            PlantConfig::new(0.6, 0.2, CoefficientModel::chebyshev(3.0, 4.0, 3.5, 9.0)).unwrap();
        let coeff = field(cfg.coefficients.clone(), 0.02);
        let kernels = solve_control_kernels(&cfg, &coeff, &SolverOptions::default()).unwrap();
        let res = kernel_residual(&kernels.k, &coeff, cfg.tau);
        assert!(res.boundary < 1e-8, "{res:?}");
        // K(s,1) = L(s + h) = J(s + tau)
        for (p, s) in coeff.grid().nodes().iter().enumerate() {
            assert!((kernels.k[[p, 50]] - kernels.l_at(s + cfg.h)).abs() < 1e-8);
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let coeff = field(CoefficientModel::chebyshev(4.0, 3.5, 5.0, 9.0), 0.02);
        let opts = SolverOptions {
            tol: 1e-14,
            max_iter: 3,
            fixed_iterations: None,
        };
        assert!(matches!(
            solve_k(&coeff, 1.0, &opts),
            Err(Error::NonConvergence { iterations: 3, .. })
        ));
        let bad = SolverOptions {
            tol: 0.0,
            ..SolverOptions::default()
        };
        assert!(matches!(solve_k(&coeff, 1.0, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn residual_of_zero_problem_vanishes() {
        let coeff = field(CoefficientModel::zero(), 0.05);
        let k = Array2::zeros((21, 21));
        assert_eq!(kernel_residual(&k, &coeff, 1.2).sup(), 0.0);
    }

    #[test]
    fn planted_constant_kernel_shows_boundary_mismatch() {
        let coeff = field(CoefficientModel::zero(), 0.05);
        let mut k = Array2::zeros((21, 21));
        for i in 0..21 {
            for j in i..21 {
                k[[i, j]] = 1.0;
            }
        }
        let res = kernel_residual(&k, &coeff, 1.0);
        assert!(res.sup() >= 1.0);
        assert_eq!(res.boundary, 1.0);
    }

    #[test]
    fn inverse_of_zero_kernels_is_zero() {
        let cfg = PlantConfig::new(1.0, 0.5, CoefficientModel::zero()).unwrap();
        let coeff = field(cfg.coefficients.clone(), 0.1);
        let kernels = solve_control_kernels(&cfg, &coeff, &SolverOptions::default()).unwrap();
        let inv = solve_inverse(&kernels, &SolverOptions::default()).unwrap();
        assert!(inv
            .b
            .iter()
            .chain(inv.d.iter())
            .chain(inv.e.iter())
            .all(|&v| v == 0.0));
    }
}
