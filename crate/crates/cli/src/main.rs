//! `pide-backstep`: kernels, observer gains, datasets, simulation, verification and
//! DeepONet inference from the command line.
//!
//! Exit codes: 0 ok, 1 usage or input error, 2 numeric failure, 3 verification failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pide_backstep::container::{Container, Tensor};
use pide_backstep::dataset::{gen_dataset, sample_count, DatasetKind, DatasetSpec};
use pide_backstep::neuralop::{
    bench_inference, encode_control, encode_delay, encode_observer, gains_from_network,
    DeepONetConfig, DeepONetWeights, NetworkSet,
};
use pide_backstep::plant::{eval_coefficients, CoefficientModel, PlantConfig, SpatialGrid};
use pide_backstep::simulator::{
    run, ControlGains, GainKind, GainProvider, InputSignal, MeasurementMode, Scenario,
    SimulationConfig, Trajectory,
};
use pide_backstep::suites::{run_suite, Suite, SuiteInput, TOOL_VERSION};
use pide_backstep::verify::{
    decay_rate, default_decay_window, perturb_control_gains, perturb_observer_gains,
};
use pide_backstep::{
    observer_gains, solve_control_kernels, solve_inverse, solve_observer_kernels, Error,
    ObserverGains, SolverOptions,
};
use rand_chacha::rand_core::SeedableRng;
use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Parser, Debug)]
#[command(
    name = "pide-backstep",
    version,
    about = "Delay-compensating backstepping design for a hyperbolic PIDE"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve K, L, J for one plant and write them to a container.
    Kernels(KernelsArgs),
    /// Solve the observer kernels and gains Q1, Q2 for one plant.
    ObserverGains(ObserverArgs),
    /// Generate a training corpus of solved plants.
    Dataset(DatasetArgs),
    /// Run a closed- or open-loop simulation.
    Simulate(SimulateArgs),
    /// Run a verification suite and print its JSON report.
    Verify(VerifyArgs),
    /// Evaluate one network on a plant.
    Infer(InferArgs),
    /// Time solver against network gain computation.
    Bench(BenchArgs),
    /// Write untrained networks in the trainer's export format for a dataset.
    TrainStub(TrainStubArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct PlantArgs {
    /// Recycle delay.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Sensor dead time.
    #[arg(long, default_value_t = 0.5)]
    h: f64,
    #[arg(long, default_value_t = 5.0)]
    mu1: f64,
    #[arg(long, default_value_t = 5.0)]
    mu2: f64,
    #[arg(long, default_value_t = 5.0)]
    mu3: f64,
    /// Amplitude of f.
    #[arg(long, default_value_t = 9.0)]
    amplitude_f: f64,
    /// Grid spacing; 1/ds must be an integer.
    #[arg(long, default_value_t = 0.02)]
    ds: f64,
}

impl PlantArgs {
    fn plant(&self) -> pide_backstep::Result<PlantConfig> {
        PlantConfig::new(
            self.tau,
            self.h,
            CoefficientModel::chebyshev(self.mu1, self.mu2, self.mu3, self.amplitude_f),
        )
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone, Serialize)]
struct OutputArgs {
    /// Output path; relative names are placed in $PDON_OUT_DIR when it is set.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug, Serialize)]
struct KernelsArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Also solve and store the inverse kernels B, D, E.
    #[arg(long)]
    inverse: bool,
}

#[derive(Args, Debug, Serialize)]
struct ObserverArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct DatasetArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = ["control", "observer"], default_value = "control")]
    kind: String,
    #[arg(long, default_value_t = 0.02)]
    ds: f64,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum Mode {
    OpenLoop,
    Uncompensated,
    StateFb,
    OutputFb,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "snake_case")]
enum Gains {
    Analytic,
    File,
    Neural,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[arg(long, value_enum, default_value_t = Mode::StateFb)]
    mode: Mode,
    /// Initial profile: sin, sin2pi, sinpi or a constant.
    #[arg(long, default_value = "sin")]
    x0: String,
    /// Constant initial observer state; starts the observer.
    #[arg(long)]
    xhat0: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
    #[arg(long)]
    dt: Option<f64>,
    /// Record norms every this many steps.
    #[arg(long, default_value_t = 10)]
    stride: usize,
    #[arg(long, value_enum, default_value_t = Gains::Analytic)]
    gains: Gains,
    /// Kernel container from `kernels` (with --gains file).
    #[arg(long)]
    kernels_file: Option<PathBuf>,
    /// Gain container from `observer-gains` (with --gains file).
    #[arg(long)]
    observer_file: Option<PathBuf>,
    /// Directory of network files (with --gains neural).
    #[arg(long)]
    weights_dir: Option<PathBuf>,
    /// Add uniform noise of this amplitude to every gain sample.
    #[arg(long)]
    perturb: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Drive the open loop with 5 sin(3 pi t) + 3 cos(2 pi t).
    #[arg(long)]
    test_input: bool,
    /// Model the sensor delay as a stored history instead of a transport channel.
    #[arg(long)]
    delay_line: bool,
    /// Long-format `t,s,x` snapshot CSV.
    #[arg(long)]
    snapshots: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    snapshot_stride: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[arg(long, value_parser = Suite::ALL.map(|s| s.as_str()))]
    suite: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ds: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Repetitions per timing measurement.
    #[arg(long)]
    runs: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct InferArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[arg(long)]
    weights_dir: PathBuf,
    #[arg(long, value_parser = ["K", "L", "J", "Q1", "Q2"])]
    net: String,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct BenchArgs {
    /// Network directory; random full-size networks when omitted.
    #[arg(long)]
    weights_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.01,0.005")]
    ds: Vec<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct TrainStubArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_parser = ["K", "LJ", "Q"])]
    net: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving the network files.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonConvergence { .. } | Error::Cfl { .. } | Error::NonFinite { .. } => 2,
            Error::Verification(_) => 3,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

type CliResult = Result<(), Failure>;

fn out_path(given: &Option<PathBuf>, default_name: &str) -> PathBuf {
    let path = given.clone().unwrap_or_else(|| PathBuf::from(default_name));
    let path = match std::env::var_os("PDON_OUT_DIR") {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        let _ = std::fs::create_dir_all(parent);
    }
    path
}

fn envelope(command: &str, input: &impl Serialize, result: Value) -> Result<Value, Failure> {
    Ok(json!({
        "tool_version": TOOL_VERSION,
        "command": command,
        "input": serde_json::to_value(input)?,
        "result": result,
    }))
}

fn print_json(v: &Value) -> CliResult {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn vec_tensor(name: &str, data: Vec<f64>, c: &mut Container) -> pide_backstep::Result<()> {
    c.insert(name, Tensor::vector(data))
}

fn plant_meta(c: &mut Container, cfg: &PlantConfig, ds: f64) -> Result<(), Failure> {
    c.meta.insert("plant".into(), serde_json::to_value(cfg)?);
    c.meta.insert("ds".into(), ds.into());
    c.meta.insert("tool_version".into(), TOOL_VERSION.into());
    Ok(())
}

fn write_columns(path: &Path, header: &str, columns: &[&[f64]]) -> CliResult {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for k in 0..columns[0].len() {
        let row: Vec<String> = columns.iter().map(|c| c[k].to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

fn kernels(args: &KernelsArgs) -> CliResult {
    let cfg = args.plant.plant()?;
    let grid = SpatialGrid::new(args.plant.ds)?;
    let coeff = eval_coefficients(&cfg, grid);
    let opts = SolverOptions::default();
    let kernels = solve_control_kernels(&cfg, &coeff, &opts)?;
    let gains = ControlGains::from_kernels(&kernels);
    let nodes = grid.nodes();
    let path = out_path(
        &args.output.out,
        if args.output.format == Format::Csv {
            "kernels.csv"
        } else {
            "kernels.pdon"
        },
    );
    if args.output.format == Format::Csv {
        write_columns(&path, "s,k0,l,j", &[&nodes, &gains.k0, &gains.l, &gains.j])?;
    } else {
        let mut c = Container::new();
        c.insert("K", Tensor::from_array2(&kernels.k))?;
        vec_tensor("L", kernels.l.clone(), &mut c)?;
        vec_tensor("J", kernels.j.clone(), &mut c)?;
        vec_tensor("k0", gains.k0.clone(), &mut c)?;
        vec_tensor("l_gain", gains.l.clone(), &mut c)?;
        vec_tensor("j_gain", gains.j.clone(), &mut c)?;
        if args.inverse {
            let inv = solve_inverse(&kernels, &opts)?;
            c.insert("B", Tensor::from_array2(&inv.b))?;
            c.insert("D", Tensor::from_array2(&inv.d))?;
            c.insert("E", Tensor::from_array2(&inv.e))?;
        }
        plant_meta(&mut c, &cfg, grid.ds())?;
        c.meta.insert("L_dphi".into(), kernels.l_step().into());
        c.meta.insert("J_dsigma".into(), kernels.j_step().into());
        c.meta.insert("convergence".into(), json!({ "iterations": kernels.convergence.iterations, "change": kernels.convergence.change }));
        c.write(&path)?;
    }
    print_json(&envelope(
        "kernels",
        args,
        json!({ "out": path, "iterations": kernels.convergence.iterations, "k_sup": kernels.k.iter().fold(0.0_f64, |m, v| m.max(v.abs())) }),
    )?)
}

fn observer(args: &ObserverArgs) -> CliResult {
    let cfg = args.plant.plant()?;
    let grid = SpatialGrid::new(args.plant.ds)?;
    let coeff = eval_coefficients(&cfg, grid);
    let obs = solve_observer_kernels(&cfg, &coeff, &SolverOptions::default())?;
    let gains = obs.gains();
    let path = out_path(
        &args.output.out,
        if args.output.format == Format::Csv {
            "observer.csv"
        } else {
            "observer.pdon"
        },
    );
    if args.output.format == Format::Csv {
        write_columns(&path, "s,q1,q2", &[&grid.nodes(), &gains.q1, &gains.q2])?;
    } else {
        let mut c = Container::new();
        vec_tensor("Q1", gains.q1.clone(), &mut c)?;
        vec_tensor("Q2", gains.q2.clone(), &mut c)?;
        c.insert("F", Tensor::from_array2(&obs.f))?;
        c.insert("M", Tensor::from_array2(&obs.m()))?;
        c.insert("P", Tensor::from_array2(&obs.p()))?;
        vec_tensor("R", obs.r.clone(), &mut c)?;
        vec_tensor("S", obs.s.clone(), &mut c)?;
        plant_meta(&mut c, &cfg, grid.ds())?;
        c.write(&path)?;
    }
    print_json(&envelope(
        "observer-gains",
        args,
        json!({ "out": path, "q1_0": gains.q1[0], "q2_0": gains.q2[0] }),
    )?)
}

fn dataset(args: &DatasetArgs) -> CliResult {
    let kind: DatasetKind = args.kind.parse()?;
    let spec = DatasetSpec {
        grid: SpatialGrid::new(args.ds)?,
        ..DatasetSpec::new(args.n, args.seed, kind)
    };
    let container = gen_dataset(&spec, args.jobs)?;
    let path = out_path(&args.out, &format!("{}.pdon", kind.as_str()));
    container.write(&path)?;
    print_json(&envelope(
        "dataset",
        args,
        json!({ "out": path, "samples": sample_count(&container)?, "retries": container.meta["retries"] }),
    )?)
}

fn initial_profile(spec: &str, nodes: &[f64]) -> Result<Vec<f64>, Failure> {
    use std::f64::consts::PI;
    let f: Box<dyn Fn(f64) -> f64> = match spec {
        "sin" => Box::new(f64::sin),
        "sinpi" => Box::new(|s| (PI * s).sin()),
        "sin2pi" => Box::new(|s| (2.0 * PI * s).sin()),
        other => {
            let v: f64 = other.parse().map_err(|_| {
                usage(format!(
                    "--x0 must be sin, sinpi, sin2pi or a number, got {other:?}"
                ))
            })?;
            Box::new(move |_| v)
        }
    };
    Ok(nodes.iter().map(|&s| f(s)).collect())
}

fn read_vector(c: &Container, name: &str, n: usize) -> Result<Vec<f64>, Failure> {
    let t = c.require(name)?;
    if t.data.len() != n {
        return Err(Error::Shape(format!(
            "{name} has {} samples, the grid has {n}",
            t.data.len()
        ))
        .into());
    }
    Ok(t.data.clone())
}

fn load_gains(
    args: &SimulateArgs,
    cfg: &PlantConfig,
    grid: SpatialGrid,
    need_observer: bool,
) -> Result<GainProvider, Failure> {
    let coeff = eval_coefficients(cfg, grid);
    let opts = SolverOptions::default();
    let n = grid.len();
    let mut provider = match args.gains {
        Gains::Analytic => {
            let control = match args.mode {
                Mode::Uncompensated => ControlGains::uncompensated(&coeff, &opts)?,
                Mode::OpenLoop => ControlGains::zeros(n),
                _ => ControlGains::from_kernels(&solve_control_kernels(cfg, &coeff, &opts)?),
            };
            let obs = if need_observer {
                Some(observer_gains(cfg, &coeff, &opts)?)
            } else {
                None
            };
            GainProvider::analytic(control, obs)
        }
        Gains::File => {
            let control = match &args.kernels_file {
                Some(p) => {
                    let c = Container::read(p)?;
                    ControlGains {
                        k0: read_vector(&c, "k0", n)?,
                        l: read_vector(&c, "l_gain", n)?,
                        j: read_vector(&c, "j_gain", n)?,
                    }
                }
                None if matches!(args.mode, Mode::OpenLoop) => ControlGains::zeros(n),
                None => return Err(usage("--gains file needs --kernels-file")),
            };
            let observer = match &args.observer_file {
                Some(p) => {
                    let c = Container::read(p)?;
                    Some(ObserverGains {
                        q1: read_vector(&c, "Q1", n)?,
                        q2: read_vector(&c, "Q2", n)?,
                    })
                }
                None if need_observer => {
                    return Err(usage(
                        "the observer needs --observer-file with --gains file",
                    ))
                }
                None => None,
            };
            GainProvider {
                kind: GainKind::File,
                control,
                observer,
            }
        }
        Gains::Neural => {
            let dir = args
                .weights_dir
                .as_ref()
                .ok_or_else(|| usage("--gains neural needs --weights-dir"))?;
            let nets = NetworkSet::load_dir(dir)?;
            gains_from_network(&nets, cfg, grid)?
        }
    };
    if matches!(args.mode, Mode::Uncompensated) && !matches!(args.gains, Gains::Analytic) {
        provider.control = provider.control.without_delay_terms();
    }
    if let Some(amp) = args.perturb {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
        provider.control = perturb_control_gains(&provider.control, amp, &mut rng);
        if let Some(o) = &provider.observer {
            provider.observer = Some(perturb_observer_gains(o, amp, &mut rng));
        }
    }
    Ok(provider)
}

fn trajectory_summary(traj: &Trajectory, cfg: &PlantConfig) -> Value {
    let n0 = traj.l2_x[0];
    let last = traj.l2_x.last().copied().unwrap_or(f64::NAN);
    json!({
        "records": traj.len(),
        "dt": traj.dt,
        "initial_l2_x": n0,
        "final_l2_x": last,
        "final_ratio": last / n0,
        "decay_rate": decay_rate(traj, default_decay_window(cfg, traj)).ok(),
        "final_estimation_error": traj.estimation_error.as_ref().and_then(|e| e.last().copied()),
        "estimation_error_ratio": traj.estimation_error.as_ref().map(|e| e.last().copied().unwrap_or(f64::NAN) / e[0]),
    })
}

fn simulate(args: &SimulateArgs) -> CliResult {
    let cfg = args.plant.plant()?;
    let grid = SpatialGrid::new(args.plant.ds)?;
    let coeff = eval_coefficients(&cfg, grid);
    let x0 = initial_profile(&args.x0, &grid.nodes())?;
    let scenario = match args.mode {
        Mode::OpenLoop => Scenario::OpenLoop,
        Mode::Uncompensated => Scenario::Uncompensated,
        Mode::StateFb => Scenario::StateFeedback,
        Mode::OutputFb => Scenario::OutputFeedback,
    };
    let xhat0 = match (args.xhat0, args.mode) {
        (Some(v), _) => Some(v),
        (None, Mode::OutputFb) => Some(0.0),
        (None, _) => None,
    };
    let gains = load_gains(args, &cfg, grid, xhat0.is_some())?;
    let sim = SimulationConfig {
        horizon: args.horizon,
        dt: args.dt,
        stride: args.stride,
        snapshot_stride: args.snapshots.as_ref().map(|_| args.snapshot_stride),
        measurement: if args.delay_line {
            MeasurementMode::DelayLine
        } else {
            MeasurementMode::Transport
        },
        input: args.test_input.then(InputSignal::observer_test),
        observer_x0: xhat0.map(|v| vec![v; grid.len()]),
    };
    let traj = run(scenario, &cfg, &coeff, &gains, &x0, &sim)?;
    let summary = trajectory_summary(&traj, &cfg);
    let path = out_path(
        &args.output.out,
        if args.output.format == Format::Csv {
            "trajectory.csv"
        } else {
            "trajectory.json"
        },
    );
    match args.output.format {
        Format::Csv => traj.write_csv(BufWriter::new(File::create(&path)?))?,
        Format::Json => {
            let body = envelope(
                "simulate",
                args,
                json!({
                    "summary": summary,
                    "t": traj.times,
                    "l2_x": traj.l2_x,
                    "l2_v": traj.l2_v,
                    "l2_u": traj.l2_u,
                    "U": traj.control,
                    "estimation_error": traj.estimation_error,
                }),
            )?;
            std::fs::write(&path, serde_json::to_vec(&body)?)?;
        }
    }
    if let Some(p) = &args.snapshots {
        traj.write_snapshots_csv(BufWriter::new(File::create(out_path(
            &Some(p.clone()),
            "",
        ))?))?;
    }
    print_json(&envelope(
        "simulate",
        args,
        json!({ "out": path, "gains": gains.kind, "summary": summary }),
    )?)
}

fn verify(args: &VerifyArgs) -> CliResult {
    let suite: Suite = args.suite.parse()?;
    let input = SuiteInput {
        n: args.n,
        seed: args.seed,
        ds: args.ds,
        jobs: args.jobs,
        runs: args.runs,
    };
    let report = run_suite(suite, &input)?;
    let text = match args.output.format {
        Format::Json => serde_json::to_string_pretty(&report)?,
        Format::Csv => {
            let mut s = String::from("check,passed,detail\n");
            for c in &report.checks {
                s.push_str(&format!(
                    "{},{},\"{}\"\n",
                    c.name,
                    c.passed,
                    c.detail.replace('"', "'")
                ));
            }
            s
        }
    };
    if let Some(p) = &args.output.out {
        std::fs::write(out_path(&Some(p.clone()), ""), &text)?;
    }
    println!("{text}");
    if report.passed {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            message: format!("suite {} failed: {}", suite.as_str(), report.summary()),
        })
    }
}

fn infer(args: &InferArgs) -> CliResult {
    let cfg = args.plant.plant()?;
    let grid = SpatialGrid::new(args.plant.ds)?;
    let nets = NetworkSet::load_dir(&args.weights_dir)?;
    let net = match args.net.as_str() {
        "K" => &nets.k,
        "L" => &nets.l,
        "J" => &nets.j,
        "Q1" => &nets.q1,
        _ => &nets.q2,
    }
    .as_ref()
    .ok_or_else(|| {
        usage(format!(
            "{} has no {}.pdon",
            args.weights_dir.display(),
            args.net
        ))
    })?;
    let coeff = eval_coefficients(&cfg, SpatialGrid::with_intervals(net.config().grid - 1)?);
    let nodes = grid.nodes();
    let (encoding, queries): (Vec<f64>, Vec<f64>) = match args.net.as_str() {
        "K" => (
            encode_control(&cfg, &coeff),
            nodes.iter().flat_map(|&q| [0.0, q]).collect(),
        ),
        "L" | "J" => (
            encode_delay(&cfg, &coeff),
            nodes.iter().flat_map(|&q| [0.0, q]).collect(),
        ),
        _ => (encode_observer(&cfg, &coeff), nodes.clone()),
    };
    let values = net.forward(&encoding, &queries)?;
    match args.output.format {
        Format::Csv => {
            let path = out_path(&args.output.out, "infer.csv");
            write_columns(&path, "x,value", &[&nodes, &values])?;
            print_json(&envelope("infer", args, json!({ "out": path }))?)
        }
        Format::Json => {
            let body = envelope("infer", args, json!({ "x": nodes, "values": values }))?;
            if let Some(p) = &args.output.out {
                std::fs::write(out_path(&Some(p.clone()), ""), serde_json::to_vec(&body)?)?;
            }
            print_json(&body)
        }
    }
}

fn bench(args: &BenchArgs) -> CliResult {
    let nets = match &args.weights_dir {
        Some(d) => NetworkSet::load_dir(d)?,
        None => NetworkSet::random(args.seed)?,
    };
    let plants: Vec<PlantConfig> = (0..args.runs.max(1) as u64)
        .map(|i| {
            pide_backstep::suites::sweep_plant(
                args.seed,
                i,
                &pide_backstep::SamplingRanges::observer(),
            )
        })
        .collect::<pide_backstep::Result<_>>()?;
    let rows = bench_inference(
        &nets,
        &plants,
        &args.ds,
        args.runs,
        &SolverOptions::default(),
    )?;
    match args.output.format {
        Format::Csv => {
            let mut s = String::from("family,ds,runs,solver_seconds,network_seconds,speedup\n");
            for r in &rows {
                let family = serde_json::to_value(r.family)?;
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    family.as_str().unwrap_or("?"),
                    r.ds,
                    r.runs,
                    r.solver_seconds,
                    r.network_seconds,
                    r.speedup
                ));
            }
            if let Some(p) = &args.output.out {
                std::fs::write(out_path(&Some(p.clone()), ""), &s)?;
            }
            print!("{s}");
            Ok(())
        }
        Format::Json => {
            let body = envelope("bench", args, serde_json::to_value(&rows)?)?;
            if let Some(p) = &args.output.out {
                std::fs::write(out_path(&Some(p.clone()), ""), serde_json::to_vec(&body)?)?;
            }
            print_json(&body)
        }
    }
}

/// Optimiser settings recorded for the external trainer.
fn train_config() -> Value {
    json!({
        "optimizer": "adam",
        "learning_rate": 1e-3,
        "batch_size": 64,
        "epochs": 300,
        "loss": "smooth_l1",
        "trained": false,
    })
}

fn train_stub(args: &TrainStubArgs) -> CliResult {
    let data = Container::read(&args.dataset)?;
    let kind = data.meta.get("kind").and_then(Value::as_str).unwrap_or("");
    let expected = if args.net == "Q" {
        "observer"
    } else {
        "control"
    };
    if kind != expected {
        return Err(usage(format!(
            "--net {} needs {} {expected} dataset, {} is {kind:?}",
            args.net,
            if expected == "observer" { "an" } else { "a" },
            args.dataset.display()
        )));
    }
    let m = data.require("c")?.shape.get(1).copied().unwrap_or(0);
    let mut set = NetworkSet::default();
    let with_grid = |mut cfg: DeepONetConfig| {
        cfg.grid = m;
        cfg
    };
    match args.net.as_str() {
        "K" => {
            set.k = Some(DeepONetWeights::random(
                with_grid(DeepONetConfig::control_kernel()),
                args.seed,
            )?)
        }
        "LJ" => {
            set.l = Some(DeepONetWeights::random(
                with_grid(DeepONetConfig::delay_kernel()),
                args.seed,
            )?);
            set.j = Some(DeepONetWeights::random(
                with_grid(DeepONetConfig::delay_kernel()),
                args.seed + 1,
            )?);
        }
        _ => {
            set.q1 = Some(DeepONetWeights::random(
                with_grid(DeepONetConfig::observer_gain()),
                args.seed,
            )?);
            set.q2 = Some(DeepONetWeights::random(
                with_grid(DeepONetConfig::observer_gain()),
                args.seed + 1,
            )?);
        }
    }
    let mut meta = Map::new();
    meta.insert("train_config".into(), train_config());
    meta.insert("dataset".into(), json!({ "path": args.dataset, "kind": kind, "samples": sample_count(&data)?, "seed": data.meta.get("seed") }));
    let dir = out_path(&args.out, "weights");
    let written = set.save_dir(&dir, &meta)?;
    print_json(&envelope(
        "train-stub",
        args,
        json!({ "written": written }),
    )?)
}

fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Kernels(a) => kernels(a),
        Command::ObserverGains(a) => observer(a),
        Command::Dataset(a) => dataset(a),
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
        Command::Infer(a) => infer(a),
        Command::Bench(a) => bench(a),
        Command::TrainStub(a) => train_stub(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
