//! Training corpora of (plant, kernels) pairs stored as stacked `.pdon` arrays.
//!
//! Every sample draws its plant from a ChaCha8 stream keyed by `(seed, index)`, so the
//! container bytes do not depend on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::container::{Container, Tensor};
use crate::error::{Error, Result};
use crate::kernel::{solve_control_kernels, SolverOptions};
use crate::observer::solve_observer_kernels;
use crate::plant::{
    eval_coefficients, sample_plant_with, CoefficientModel, PlantConfig, SamplingRanges,
    SpatialGrid,
};
use crate::verify::{check_control_bounds, check_observer_bounds};

/// Attempts per sample before generation gives up.
pub const MAX_RETRIES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Control,
    Observer,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Control => "control",
            DatasetKind::Observer => "observer",
        }
    }

    /// Default sampling ranges for the kind.
    pub fn ranges(self) -> SamplingRanges {
        match self {
            DatasetKind::Control => SamplingRanges::default(),
            DatasetKind::Observer => SamplingRanges::observer(),
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "control" => Ok(Self::Control),
            "observer" => Ok(Self::Observer),
            other => Err(Error::Config(format!("unknown dataset kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub n: usize,
    pub seed: u64,
    pub kind: DatasetKind,
    pub grid: SpatialGrid,
    pub ranges: SamplingRanges,
    pub opts: SolverOptions,
}

impl DatasetSpec {
    pub fn new(n: usize, seed: u64, kind: DatasetKind) -> Self {
        Self {
            n,
            seed,
            kind,
            grid: SpatialGrid::training(),
            ranges: kind.ranges(),
            opts: SolverOptions::default(),
        }
    }
}

/// One solved sample.
#[derive(Debug, Clone)]
pub struct OperatorSample {
    pub plant: PlantConfig,
    pub f: Vec<f64>,
    pub c: Vec<f64>,
    /// Control: `K` (row-major), `L`, `J`. Observer: `Q1`, `Q2`.
    pub targets: Vec<Vec<f64>>,
    pub attempts: usize,
}

fn solve_sample(plant: &PlantConfig, spec: &DatasetSpec) -> Result<Vec<Vec<f64>>> {
    let coeff = eval_coefficients(plant, spec.grid);
    match spec.kind {
        DatasetKind::Control => {
            let kernels = solve_control_kernels(plant, &coeff, &spec.opts)?;
            let report = check_control_bounds(&kernels, None, &coeff);
            if !report.passed() {
                return Err(Error::Verification(format!(
                    "{} bound violations",
                    report.violations()
                )));
            }
            Ok(vec![
                kernels.k.iter().copied().collect(),
                kernels.l,
                kernels.j,
            ])
        }
        DatasetKind::Observer => {
            let obs = solve_observer_kernels(plant, &coeff, &spec.opts)?;
            let gains = obs.gains();
            let report = check_observer_bounds(&obs, None, &gains, &coeff);
            if !report.passed() {
                return Err(Error::Verification(format!(
                    "{} bound violations",
                    report.violations()
                )));
            }
            Ok(vec![gains.q1, gains.q2])
        }
    }
}

/// Draws and solves sample `index`, redrawing on solver failure or a bound violation.
pub fn generate_sample(spec: &DatasetSpec, index: u64) -> Result<OperatorSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let mut last_err = None;
    for attempt in 1..=MAX_RETRIES {
        let plant = sample_plant_with(&mut rng, &spec.ranges)?;
        match solve_sample(&plant, spec) {
            Ok(targets) => {
                let coeff = eval_coefficients(&plant, spec.grid);
                return Ok(OperatorSample {
                    f: coeff.f.iter().copied().collect(),
                    c: coeff.c.clone(),
                    plant,
                    targets,
                    attempts: attempt,
                });
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

fn chebyshev_params(model: &CoefficientModel) -> [f64; 3] {
    match model {
        CoefficientModel::Chebyshev { mu1, mu2, mu3, .. } => [*mu1, *mu2, *mu3],
        _ => [f64::NAN; 3],
    }
}

/// Generates `spec.n` samples in parallel and stacks them into a container.
///
/// `jobs = None` uses the global rayon pool.
pub fn gen_dataset(spec: &DatasetSpec, jobs: Option<usize>) -> Result<Container> {
    if spec.n == 0 {
        return Err(Error::Config("dataset needs n >= 1".into()));
    }
    let work = || -> Result<Vec<OperatorSample>> {
        (0..spec.n as u64)
            .into_par_iter()
            .map(|i| generate_sample(spec, i))
            .collect()
    };
    let samples = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    stack(spec, &samples)
}

fn stack(spec: &DatasetSpec, samples: &[OperatorSample]) -> Result<Container> {
    let n = samples.len();
    let m = spec.grid.len();
    let column =
        |pick: &dyn Fn(&OperatorSample) -> f64| Tensor::vector(samples.iter().map(pick).collect());
    let stacked = |shape: Vec<usize>, pick: &dyn Fn(&OperatorSample) -> &[f64]| -> Result<Tensor> {
        let data = samples
            .iter()
            .flat_map(|s| pick(s).iter().copied())
            .collect();
        Tensor::new(shape, data)
    };

    let mut c = Container::new();
    c.insert("tau", column(&|s| s.plant.tau))?;
    c.insert("h", column(&|s| s.plant.h))?;
    c.insert("eta", column(&|s| s.plant.eta()))?;
    for (k, name) in ["mu1", "mu2", "mu3"].iter().enumerate() {
        c.insert(
            *name,
            column(&|s| chebyshev_params(&s.plant.coefficients)[k]),
        )?;
    }
    c.insert("f", stacked(vec![n, m, m], &|s| &s.f)?)?;
    c.insert("c", stacked(vec![n, m], &|s| &s.c)?)?;
    let steps = (m - 1) as f64;
    match spec.kind {
        DatasetKind::Control => {
            c.insert("K", stacked(vec![n, m, m], &|s| &s.targets[0])?)?;
            c.insert("L", stacked(vec![n, m], &|s| &s.targets[1])?)?;
            c.insert("J", stacked(vec![n, m], &|s| &s.targets[2])?)?;
            c.insert("L_dphi", column(&|s| (1.0 + s.plant.h) / steps))?;
            c.insert("J_dsigma", column(&|s| (1.0 + s.plant.eta()) / steps))?;
        }
        DatasetKind::Observer => {
            c.insert("Q1", stacked(vec![n, m], &|s| &s.targets[0])?)?;
            c.insert("Q2", stacked(vec![n, m], &|s| &s.targets[1])?)?;
        }
    }
    let retries: usize = samples.iter().map(|s| s.attempts - 1).sum();
    c.meta
        .insert("kind".into(), Value::from(spec.kind.as_str()));
    c.meta.insert("n".into(), Value::from(n));
    c.meta.insert("seed".into(), Value::from(spec.seed));
    c.meta.insert("ds".into(), Value::from(spec.grid.ds()));
    c.meta.insert("retries".into(), Value::from(retries));
    c.meta
        .insert("ranges".into(), serde_json::to_value(spec.ranges)?);
    c.meta
        .insert("solver".into(), serde_json::to_value(spec.opts)?);
    c.meta.insert(
        "layout".into(),
        json!({
            "f": "f[i][j] = f(s_i, q_j), zero for i > j",
            "K": "K[i][j] = K(s_i, q_j), zero for i > j",
            "L": "L at k * L_dphi on [0, 1 + h]",
            "J": "J at k * J_dsigma on [0, 1 + eta]",
            "Q1": "Q1(s_k)",
            "Q2": "Q2(s_k)",
        }),
    );
    c.meta.insert(
        "tool_version".into(),
        Value::from(env!("CARGO_PKG_VERSION")),
    );
    Ok(c)
}

/// Number of samples stored in a dataset container.
pub fn sample_count(container: &Container) -> Result<usize> {
    Ok(container.require("tau")?.shape[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_bytes_for_the_same_seed() {
        let spec = DatasetSpec::new(2, 11, DatasetKind::Control);
        let a = gen_dataset(&spec, Some(1)).unwrap().to_bytes().unwrap();
        let b = gen_dataset(&spec, Some(2)).unwrap().to_bytes().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn control_shapes() {
        let c = gen_dataset(&DatasetSpec::new(1, 3, DatasetKind::Control), None).unwrap();
        assert_eq!(c.require("K").unwrap().shape, vec![1, 51, 51]);
        assert_eq!(c.require("L").unwrap().shape, vec![1, 51]);
        assert_eq!(c.require("J").unwrap().shape, vec![1, 51]);
        assert_eq!(sample_count(&c).unwrap(), 1);
    }

    #[test]
    fn observer_shapes_and_h_range() {
        let c = gen_dataset(&DatasetSpec::new(3, 5, DatasetKind::Observer), None).unwrap();
        assert_eq!(c.require("Q1").unwrap().shape, vec![3, 51]);
        assert!(c.get("K").is_none());
        assert!(c
            .require("h")
            .unwrap()
            .data
            .iter()
            .all(|&h| (0.1..=0.6).contains(&h)));
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(gen_dataset(&DatasetSpec::new(0, 0, DatasetKind::Control), None).is_err());
    }
}
