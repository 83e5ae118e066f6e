//! Plant instances: delays, coefficient functions and the spatial grid.
//!
//! The plant is the transport PIDE
//!
//! ```text
//! x_t = -x_s + c(s) x(1, t - tau) + ∫_s^1 f(s,q) x(q,t) dq,   x(0,t) = U(t),
//! y(t) = x(1, t - h)
//! ```
//!
//! with `0 < h < tau` and `c(1) = 0`. Coefficients are kept in closed form so that
//! off-grid arguments (such as `s + tau`) are evaluated exactly instead of interpolated.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{interp_uniform, sup_norm};

/// Uniform grid on [0, 1] with `intervals + 1` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpatialGrid {
    intervals: usize,
}

impl SpatialGrid {
    pub fn new(ds: f64) -> Result<Self> {
        if !(ds > 0.0 && ds <= 1.0 && ds.is_finite()) {
            return Err(Error::InvalidGrid(ds));
        }
        let intervals = (1.0 / ds).round();
        if (intervals * ds - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidGrid(ds));
        }
        Self::with_intervals(intervals as usize)
    }

    pub fn with_intervals(intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::InvalidGrid(f64::INFINITY));
        }
        Ok(Self { intervals })
    }

    /// The 51-point grid (ds = 0.02) used for training data and network inputs.
    pub fn training() -> Self {
        Self { intervals: 50 }
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of nodes, `1/ds + 1`.
    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ds(&self) -> f64 {
        1.0 / self.intervals as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.intervals as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }
}

/// Chebyshev-type `cos(mu * acos(s))`, defined for non-integer orders as well.
pub fn chebyshev(mu: f64, s: f64) -> f64 {
    (mu * s.clamp(-1.0, 1.0).acos()).cos()
}

/// Derivative of [`chebyshev`] in `s`, with the `s -> 1` limit `mu^2`.
pub fn chebyshev_derivative(mu: f64, s: f64) -> f64 {
    let theta = s.clamp(-1.0, 1.0).acos();
    if theta < 1e-6 {
        // mu sin(mu θ)/sin θ ≈ mu² (1 - (mu² - 1) θ² / 6)
        mu * mu * (1.0 - (mu * mu - 1.0) * theta * theta / 6.0)
    } else {
        mu * (mu * theta).sin() / theta.sin()
    }
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

/// Closed-form or tabulated description of `f(s,q)` and `c(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientModel {
    /// `f = A cos(mu1 acos s) cos(mu2 acos q)`, `c = B (cos(mu3 acos s) - cos(mu3 acos 1))`.
    Chebyshev {
        mu1: f64,
        mu2: f64,
        mu3: f64,
        amplitude_f: f64,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        amplitude_c: f64,
    },
    /// Samples on a uniform grid; `f_grid[i][j] = f(s_i, q_j)`.
    Tabulated {
        ds: f64,
        f_grid: Vec<Vec<f64>>,
        c_grid: Vec<f64>,
    },
    /// `f + f_offset` on `s <= q` and `c + c_bump * 4 s (1 - s)`.
    Perturbed {
        base: Box<CoefficientModel>,
        f_offset: f64,
        c_bump: f64,
    },
}

impl CoefficientModel {
    pub fn chebyshev(mu1: f64, mu2: f64, mu3: f64, amplitude_f: f64) -> Self {
        Self::Chebyshev {
            mu1,
            mu2,
            mu3,
            amplitude_f,
            amplitude_c: 1.0,
        }
    }

    /// `f ≡ 0`, `c ≡ 0`.
    pub fn zero() -> Self {
        Self::Chebyshev {
            mu1: 0.0,
            mu2: 0.0,
            mu3: 0.0,
            amplitude_f: 0.0,
            amplitude_c: 0.0,
        }
    }

    pub fn perturbed(self, f_offset: f64, c_bump: f64) -> Self {
        Self::Perturbed {
            base: Box::new(self),
            f_offset,
            c_bump,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Chebyshev {
                mu1,
                mu2,
                mu3,
                amplitude_f,
                amplitude_c,
            } => {
                if [*mu1, *mu2, *mu3, *amplitude_f, *amplitude_c]
                    .iter()
                    .all(|v| v.is_finite())
                {
                    Ok(())
                } else {
                    Err(Error::InvalidPlant("non-finite Chebyshev parameter".into()))
                }
            }
            Self::Tabulated { ds, f_grid, c_grid } => {
                let grid = SpatialGrid::new(*ds)?;
                let n = grid.len();
                if c_grid.len() != n || f_grid.len() != n || f_grid.iter().any(|r| r.len() != n) {
                    return Err(Error::Shape(format!(
                        "tabulated coefficients must be {n}x{n} and {n} for ds = {ds}"
                    )));
                }
                if c_grid[n - 1].abs() > 1e-12 {
                    return Err(Error::InvalidPlant(format!(
                        "c(1) must vanish, got {}",
                        c_grid[n - 1]
                    )));
                }
                Ok(())
            }
            Self::Perturbed { base, .. } => base.validate(),
        }
    }

    /// `f(s, q)`, zero for `s > q`.
    pub fn f(&self, s: f64, q: f64) -> f64 {
        if s > q {
            return 0.0;
        }
        match self {
            Self::Chebyshev {
                mu1,
                mu2,
                amplitude_f,
                ..
            } => amplitude_f * chebyshev(*mu1, s) * chebyshev(*mu2, q),
            Self::Tabulated { ds, f_grid, .. } => bilinear(f_grid, *ds, s, q),
            Self::Perturbed { base, f_offset, .. } => base.f(s, q) + f_offset,
        }
    }

    /// `c(s)`.
    pub fn c(&self, s: f64) -> f64 {
        match self {
            Self::Chebyshev {
                mu3, amplitude_c, ..
            } => {
                if *amplitude_c == 0.0 {
                    0.0
                } else {
                    amplitude_c * (chebyshev(*mu3, s) - chebyshev(*mu3, 1.0))
                }
            }
            Self::Tabulated { ds, c_grid, .. } => interp_uniform(c_grid, 0.0, *ds, s),
            Self::Perturbed { base, c_bump, .. } => base.c(s) + c_bump * 4.0 * s * (1.0 - s),
        }
    }

    /// `c'(s)`: analytic for the Chebyshev form, piecewise slope for tables.
    pub fn dc(&self, s: f64) -> f64 {
        match self {
            Self::Chebyshev {
                mu3, amplitude_c, ..
            } => amplitude_c * chebyshev_derivative(*mu3, s),
            Self::Tabulated { ds, c_grid, .. } => {
                let n = c_grid.len();
                let k = ((s / ds).floor().max(0.0) as usize).min(n - 2);
                (c_grid[k + 1] - c_grid[k]) / ds
            }
            Self::Perturbed { base, c_bump, .. } => base.dc(s) + c_bump * 4.0 * (1.0 - 2.0 * s),
        }
    }
}

fn bilinear(table: &[Vec<f64>], ds: f64, s: f64, q: f64) -> f64 {
    let n = table.len();
    let locate = |x: f64| {
        let pos = (x / ds).clamp(0.0, (n - 1) as f64);
        let k = (pos.floor() as usize).min(n - 2);
        (k, pos - k as f64)
    };
    let (i, a) = locate(s);
    let (j, b) = locate(q);
    let v00 = table[i][j];
    let v01 = table[i][j + 1];
    let v10 = table[i + 1][j];
    let v11 = table[i + 1][j + 1];
    (1.0 - a) * ((1.0 - b) * v00 + b * v01) + a * ((1.0 - b) * v10 + b * v11)
}

#[derive(Deserialize)]
struct PlantConfigRaw {
    tau: f64,
    h: f64,
    #[serde(flatten)]
    coefficients: CoefficientModel,
}

/// Delays plus coefficient functions of one plant instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlantConfigRaw")]
pub struct PlantConfig {
    /// Recycle delay.
    pub tau: f64,
    /// Sensor dead time.
    pub h: f64,
    #[serde(flatten)]
    pub coefficients: CoefficientModel,
}

impl TryFrom<PlantConfigRaw> for PlantConfig {
    type Error = Error;

    fn try_from(raw: PlantConfigRaw) -> Result<Self> {
        Self::new(raw.tau, raw.h, raw.coefficients)
    }
}

impl PlantConfig {
    pub fn new(tau: f64, h: f64, coefficients: CoefficientModel) -> Result<Self> {
        if !(tau.is_finite() && h.is_finite() && h > 0.0 && h < tau) {
            return Err(Error::InvalidPlant(format!(
                "delays must satisfy 0 < h < tau, got tau = {tau}, h = {h}"
            )));
        }
        coefficients.validate()?;
        Ok(Self {
            tau,
            h,
            coefficients,
        })
    }

    /// The configuration used for the reported experiments: tau = 1, h = 0.5, all mu = 5.
    pub fn reference() -> Self {
        Self::new(1.0, 0.5, CoefficientModel::chebyshev(5.0, 5.0, 5.0, 9.0))
            .expect("reference plant is admissible")
    }

    /// `eta = tau - h`, the residual recycle delay after the sensor dead time.
    pub fn eta(&self) -> f64 {
        self.tau - self.h
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(tau, self.h, self.coefficients.clone())
    }

    pub fn with_h(&self, h: f64) -> Result<Self> {
        Self::new(self.tau, h, self.coefficients.clone())
    }

    pub fn with_coefficients(&self, coefficients: CoefficientModel) -> Result<Self> {
        Self::new(self.tau, self.h, coefficients)
    }
}

/// Uniform sampling intervals for random plants. Degenerate intervals are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingRanges {
    pub tau: (f64, f64),
    pub h: (f64, f64),
    pub mu: (f64, f64),
    pub amplitude_f: f64,
}

impl Default for SamplingRanges {
    fn default() -> Self {
        Self {
            tau: (0.8, 2.0),
            h: (0.1, 0.7),
            mu: (3.0, 6.0),
            amplitude_f: 9.0,
        }
    }
}

impl SamplingRanges {
    /// Sensor delays restricted to U(0.1, 0.6), as used for the observer-gain corpus.
    pub fn observer() -> Self {
        Self {
            h: (0.1, 0.6),
            ..Self::default()
        }
    }
}

const MAX_SAMPLING_ATTEMPTS: usize = 1000;

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draws one plant, rejecting `h >= tau`.
pub fn sample_plant_with(rng: &mut impl Rng, ranges: &SamplingRanges) -> Result<PlantConfig> {
    for (lo, hi) in [ranges.tau, ranges.h, ranges.mu] {
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidRanges { attempts: 0 });
        }
    }
    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let tau = uniform(rng, ranges.tau);
        let h = uniform(rng, ranges.h);
        let mu1 = uniform(rng, ranges.mu);
        let mu2 = uniform(rng, ranges.mu);
        let mu3 = uniform(rng, ranges.mu);
        if h > 0.0 && h < tau {
            return PlantConfig::new(
                tau,
                h,
                CoefficientModel::chebyshev(mu1, mu2, mu3, ranges.amplitude_f),
            );
        }
    }
    Err(Error::InvalidRanges {
        attempts: MAX_SAMPLING_ATTEMPTS,
    })
}

/// Deterministic plant draw for a seed.
pub fn sample_plant(seed: u64, ranges: &SamplingRanges) -> Result<PlantConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_plant_with(&mut rng, ranges)
}

/// Coefficients sampled on a grid, with the closed form kept for off-grid evaluation.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    grid: SpatialGrid,
    model: CoefficientModel,
    /// `f[[i, j]] = f(s_i, q_j)`, zero below the diagonal.
    pub f: Array2<f64>,
    pub c: Vec<f64>,
    pub dc: Vec<f64>,
}

impl CoefficientField {
    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    pub fn model(&self) -> &CoefficientModel {
        &self.model
    }

    /// Off-grid `c`, from the closed form.
    pub fn c_at(&self, s: f64) -> f64 {
        self.model.c(s)
    }

    /// Measured `sup |f|` over the upper triangle.
    pub fn f_bar(&self) -> f64 {
        self.f.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Measured `sup |c|`.
    pub fn c_bar(&self) -> f64 {
        sup_norm(&self.c)
    }
}

/// Samples `f` on `s_i <= q_j` and `c`, `c'` on the grid nodes.
pub fn eval_coefficients(cfg: &PlantConfig, grid: SpatialGrid) -> CoefficientField {
    eval_model(&cfg.coefficients, grid)
}

pub fn eval_model(model: &CoefficientModel, grid: SpatialGrid) -> CoefficientField {
    let n = grid.len();
    let nodes = grid.nodes();
    let mut f = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            f[[i, j]] = model.f(nodes[i], nodes[j]);
        }
    }
    let mut c: Vec<f64> = nodes.iter().map(|&s| model.c(s)).collect();
    // c(1) = 0 holds analytically; tables are validated to within 1e-12.
    c[n - 1] = 0.0;
    let dc = nodes.iter().map(|&s| model.dc(s)).collect();
    CoefficientField {
        grid,
        model: model.clone(),
        f,
        c,
        dc,
    }
}
