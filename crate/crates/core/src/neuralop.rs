//! DeepONet inference for the kernel and gain operators.
//!
//! The branch net maps a stacked `C × 51 × 51` encoding of the plant through two
//! `5 × 5` stride-2 convolutions without padding (`51 → 24 → 10`), a flatten to
//! `128 · 10 · 10 = 12800` features and two dense layers `12800 → 512 → 256`. The trunk
//! maps one query point (`(s, q)` or `s`) through `d → 128 → 256`. The output is the dot
//! product of both 256-vectors plus a scalar bias.
//!
//! Weights use PyTorch layouts: convolutions `[out, in, k, k]`, dense layers `[out, in]`.

use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{Container, Tensor};
use crate::error::{Error, Result};
use crate::kernel::{solve_control_kernels, SolverOptions};
use crate::observer::{observer_gains, ObserverGains};
use crate::plant::{eval_coefficients, CoefficientField, PlantConfig, SpatialGrid};
use crate::simulator::{ControlGains, GainKind, GainProvider};

pub const CONFIG_KEY: &str = "deeponet_config";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, values: &mut [f64]) {
        match self {
            Activation::Relu => values.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => values.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Linear => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepONetConfig {
    pub input_channels: usize,
    /// Side length of the square input grid.
    pub grid: usize,
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    pub branch_fc: Vec<usize>,
    /// Coordinates per query point.
    pub trunk_input: usize,
    pub trunk_fc: Vec<usize>,
    /// One tag per branch layer, convolutions first.
    pub branch_activations: Vec<Activation>,
    pub trunk_activations: Vec<Activation>,
    pub output_bias: bool,
}

impl DeepONetConfig {
    fn full_size(input_channels: usize, trunk_input: usize) -> Self {
        Self {
            input_channels,
            grid: 51,
            conv_channels: vec![64, 128],
            kernel_size: 5,
            stride: 2,
            padding: 0,
            branch_fc: vec![512, 256],
            trunk_input,
            trunk_fc: vec![128, 256],
            branch_activations: vec![
                Activation::Relu,
                Activation::Relu,
                Activation::Relu,
                Activation::Linear,
            ],
            trunk_activations: vec![Activation::Relu, Activation::Linear],
            output_bias: true,
        }
    }

    /// `K`: channels `[tau, f, c]`, queries `(s, q)`.
    pub fn control_kernel() -> Self {
        Self::full_size(3, 2)
    }

    /// `L` or `J`: channels `[tau, h, f, c]`, queries `(s, r)` for `L(s + h r)` or `J(s + eta r)`.
    pub fn delay_kernel() -> Self {
        Self::full_size(4, 2)
    }

    /// `Q1` or `Q2`: channels `[h, f]`, queries `s`.
    pub fn observer_gain() -> Self {
        Self::full_size(2, 1)
    }

    /// Spatial side length after each convolution.
    pub fn conv_sides(&self) -> Vec<usize> {
        let mut side = self.grid;
        self.conv_channels
            .iter()
            .map(|_| {
                side = (side + 2 * self.padding - self.kernel_size) / self.stride + 1;
                side
            })
            .collect()
    }

    pub fn flatten_dim(&self) -> usize {
        let side = self.conv_sides().last().copied().unwrap_or(self.grid);
        let channels = self
            .conv_channels
            .last()
            .copied()
            .unwrap_or(self.input_channels);
        channels * side * side
    }

    /// Number of basis components `p`.
    pub fn basis(&self) -> usize {
        self.branch_fc.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("deeponet config: {msg}")));
        if self.input_channels == 0
            || self.trunk_input == 0
            || self.stride == 0
            || self.kernel_size == 0
        {
            return bad("channels, trunk input, stride and kernel size must be positive".into());
        }
        let mut side = self.grid + 2 * self.padding;
        for _ in &self.conv_channels {
            if side < self.kernel_size {
                return bad(format!(
                    "grid {} too small for {} convolutions",
                    self.grid,
                    self.conv_channels.len()
                ));
            }
            side = (side - self.kernel_size) / self.stride + 1 + 2 * self.padding;
        }
        if self.branch_fc.is_empty() || self.trunk_fc.is_empty() {
            return bad("branch and trunk need at least one dense layer".into());
        }
        if self.basis() != *self.trunk_fc.last().expect("nonempty") {
            return bad(format!(
                "branch output {} differs from trunk output {}",
                self.basis(),
                self.trunk_fc.last().unwrap()
            ));
        }
        if self.branch_activations.len() != self.conv_channels.len() + self.branch_fc.len()
            || self.trunk_activations.len() != self.trunk_fc.len()
        {
            return bad("one activation tag per layer is required".into());
        }
        Ok(())
    }

    /// `(name, shape)` of every parameter tensor, in storage order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut channels = self.input_channels;
        for (i, &c) in self.conv_channels.iter().enumerate() {
            out.push((
                format!("branch.conv{i}.weight"),
                vec![c, channels, self.kernel_size, self.kernel_size],
            ));
            out.push((format!("branch.conv{i}.bias"), vec![c]));
            channels = c;
        }
        let mut width = self.flatten_dim();
        for (i, &w) in self.branch_fc.iter().enumerate() {
            out.push((format!("branch.fc{i}.weight"), vec![w, width]));
            out.push((format!("branch.fc{i}.bias"), vec![w]));
            width = w;
        }
        let mut width = self.trunk_input;
        for (i, &w) in self.trunk_fc.iter().enumerate() {
            out.push((format!("trunk.fc{i}.weight"), vec![w, width]));
            out.push((format!("trunk.fc{i}.bias"), vec![w]));
            width = w;
        }
        if self.output_bias {
            out.push(("bias".into(), vec![1]));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    w: Vec<f64>,
    b: Vec<f64>,
    inputs: usize,
}

impl Dense {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.w
                .chunks_exact(self.inputs)
                .zip(&self.b)
                .map(|(row, b)| b + dot(row, x)),
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Conv {
    w: Vec<f64>,
    b: Vec<f64>,
    inputs: usize,
}

/// Dot product with eight independent accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Trained (or test) parameters of one DeepONet.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepONetWeights {
    config: DeepONetConfig,
    conv: Vec<Conv>,
    branch_fc: Vec<Dense>,
    trunk_fc: Vec<Dense>,
    bias: f64,
}

impl DeepONetWeights {
    pub fn config(&self) -> &DeepONetConfig {
        &self.config
    }

    /// Builds weights from tensors named as in [`DeepONetConfig::parameter_shapes`].
    pub fn from_tensors(
        config: DeepONetConfig,
        get: impl Fn(&str) -> Option<Tensor>,
    ) -> Result<Self> {
        config.validate()?;
        let mut tensors = Vec::new();
        for (name, shape) in config.parameter_shapes() {
            let t = get(&name)
                .ok_or_else(|| Error::Shape(format!("missing weight tensor {name:?}")))?;
            if t.shape != shape {
                return Err(Error::Shape(format!(
                    "{name}: expected shape {shape:?}, found {:?}",
                    t.shape
                )));
            }
            tensors.push(t.data);
        }
        let mut it = tensors.into_iter();
        let mut channels = config.input_channels;
        let mut conv = Vec::new();
        for &c in &config.conv_channels {
            conv.push(Conv {
                w: it.next().expect("shape list"),
                b: it.next().expect("shape list"),
                inputs: channels,
            });
            channels = c;
        }
        let mut dense = |widths: &[usize], mut inputs: usize| -> Vec<Dense> {
            widths
                .iter()
                .map(|&w| {
                    let layer = Dense {
                        w: it.next().expect("shape list"),
                        b: it.next().expect("shape list"),
                        inputs,
                    };
                    inputs = w;
                    layer
                })
                .collect()
        };
        let branch_fc = dense(&config.branch_fc, config.flatten_dim());
        let trunk_fc = dense(&config.trunk_fc, config.trunk_input);
        let bias = if config.output_bias {
            it.next().expect("shape list")[0]
        } else {
            0.0
        };
        Ok(Self {
            config,
            conv,
            branch_fc,
            trunk_fc,
            bias,
        })
    }

    /// Every parameter zero.
    pub fn zeros(config: DeepONetConfig) -> Result<Self> {
        Self::from_tensors(config.clone(), |name| {
            config
                .parameter_shapes()
                .into_iter()
                .find(|(n, _)| n == name)
                .map(|(_, shape)| {
                    Tensor::new(shape.clone(), vec![0.0; shape.iter().product()])
                        .expect("consistent")
                })
        })
    }

    /// Uniform `±1/sqrt(fan_in)` initialisation from a seed.
    pub fn random(config: DeepONetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = Vec::new();
        let shapes = config.parameter_shapes();
        for (idx, (name, shape)) in shapes.iter().enumerate() {
            // a bias takes the fan-in of the weight before it
            let fan_in: usize = if name.ends_with(".weight") {
                shape[1..].iter().product()
            } else if name == "bias" {
                1
            } else {
                shapes[idx - 1].1[1..].iter().product()
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..shape.iter().product::<usize>())
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            tensors.push((name.clone(), Tensor::new(shape.clone(), data)?));
        }
        Self::from_tensors(config, |name| {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
        })
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new();
        let mut convs = self.conv.iter();
        let mut branch = self.branch_fc.iter();
        let mut trunk = self.trunk_fc.iter();
        let mut pending_bias: Option<Vec<f64>> = None;
        for (name, shape) in self.config.parameter_shapes() {
            let data = if let Some(b) = pending_bias.take() {
                b
            } else if name == "bias" {
                vec![self.bias]
            } else if name.starts_with("branch.conv") {
                let l = convs.next().expect("shape list");
                pending_bias = Some(l.b.clone());
                l.w.clone()
            } else if name.starts_with("branch.fc") {
                let l = branch.next().expect("shape list");
                pending_bias = Some(l.b.clone());
                l.w.clone()
            } else {
                let l = trunk.next().expect("shape list");
                pending_bias = Some(l.b.clone());
                l.w.clone()
            };
            c.insert(name, Tensor::new(shape, data)?)?;
        }
        c.meta
            .insert(CONFIG_KEY.into(), serde_json::to_value(&self.config)?);
        c.meta
            .insert("tool_version".into(), env!("CARGO_PKG_VERSION").into());
        Ok(c)
    }

    /// Loads weights, validating every shape against the embedded config first.
    pub fn from_container(container: &Container) -> Result<Self> {
        let config: DeepONetConfig =
            serde_json::from_value(container.meta.get(CONFIG_KEY).cloned().ok_or_else(|| {
                Error::Format(format!("weights container lacks meta.{CONFIG_KEY}"))
            })?)
            .map_err(|e| Error::Format(format!("invalid {CONFIG_KEY}: {e}")))?;
        let expected: Vec<String> = config
            .parameter_shapes()
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        if let Some(extra) = container.names().find(|n| !expected.iter().any(|e| e == n)) {
            return Err(Error::Shape(format!("unexpected weight tensor {extra:?}")));
        }
        Self::from_tensors(config, |name| container.get(name).cloned())
    }

    /// Branch-net features of an encoding laid out `[channel][row][column]`.
    pub fn branch(&self, encoding: &[f64]) -> Result<Vec<f64>> {
        let cfg = &self.config;
        let expected = cfg.input_channels * cfg.grid * cfg.grid;
        if encoding.len() != expected {
            return Err(Error::Shape(format!(
                "encoding has {} values, network expects {expected}",
                encoding.len()
            )));
        }
        let mut act = encoding.to_vec();
        let mut side = cfg.grid;
        let mut tag = cfg.branch_activations.iter();
        for layer in &self.conv {
            let (out, out_side) = self.convolve(layer, &act, side);
            act = out;
            side = out_side;
            tag.next().expect("validated").apply(&mut act);
        }
        let mut next = Vec::new();
        for layer in &self.branch_fc {
            layer.apply(&act, &mut next);
            std::mem::swap(&mut act, &mut next);
            tag.next().expect("validated").apply(&mut act);
        }
        Ok(act)
    }

    /// Cross-correlation via patch extraction, returning `(output, side)`.
    fn convolve(&self, layer: &Conv, input: &[f64], side: usize) -> (Vec<f64>, usize) {
        let cfg = &self.config;
        let k = cfg.kernel_size;
        let (stride, pad) = (cfg.stride, cfg.padding as isize);
        let out_side = (side + 2 * cfg.padding - k) / stride + 1;
        let patch = layer.inputs * k * k;
        let mut patches = vec![0.0; out_side * out_side * patch];
        for y in 0..out_side {
            for x in 0..out_side {
                let dst = &mut patches[(y * out_side + x) * patch..][..patch];
                let mut idx = 0;
                for c in 0..layer.inputs {
                    let plane = &input[c * side * side..][..side * side];
                    for ky in 0..k {
                        let iy = (y * stride + ky) as isize - pad;
                        for kx in 0..k {
                            let ix = (x * stride + kx) as isize - pad;
                            dst[idx] = if iy >= 0
                                && ix >= 0
                                && (iy as usize) < side
                                && (ix as usize) < side
                            {
                                plane[iy as usize * side + ix as usize]
                            } else {
                                0.0
                            };
                            idx += 1;
                        }
                    }
                }
            }
        }
        let outputs = layer.b.len();
        let cells = out_side * out_side;
        let mut out = vec![0.0; outputs * cells];
        for (o, (w, b)) in layer.w.chunks_exact(patch).zip(&layer.b).enumerate() {
            for (cell, p) in patches.chunks_exact(patch).enumerate() {
                out[o * cells + cell] = b + dot(w, p);
            }
        }
        (out, out_side)
    }

    /// Trunk-net features of one query point.
    pub fn trunk(&self, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != self.config.trunk_input {
            return Err(Error::Shape(format!(
                "query has {} coordinates, network expects {}",
                query.len(),
                self.config.trunk_input
            )));
        }
        let mut act = query.to_vec();
        let mut next = Vec::new();
        for (layer, tag) in self.trunk_fc.iter().zip(&self.config.trunk_activations) {
            layer.apply(&act, &mut next);
            std::mem::swap(&mut act, &mut next);
            tag.apply(&mut act);
        }
        Ok(act)
    }

    /// `G(u)(y_i) = <branch(u), trunk(y_i)> + bias` for queries packed `trunk_input` at a time.
    pub fn forward(&self, encoding: &[f64], queries: &[f64]) -> Result<Vec<f64>> {
        let d = self.config.trunk_input;
        if !queries.len().is_multiple_of(d) {
            return Err(Error::Shape(format!(
                "{} query coordinates is not a multiple of {d}",
                queries.len()
            )));
        }
        let b = self.branch(encoding)?;
        queries
            .chunks_exact(d)
            .map(|q| Ok(dot(&b, &self.trunk(q)?) + self.bias))
            .collect()
    }
}

/// Straight-line evaluation directly from a weights container, one multiply-add at a
/// time in natural index order. Slow; used to check [`DeepONetWeights::forward`].
pub fn reference_forward(
    container: &Container,
    encoding: &[f64],
    queries: &[f64],
) -> Result<Vec<f64>> {
    let net = DeepONetWeights::from_container(container)?;
    let cfg = net.config.clone();
    if encoding.len() != cfg.input_channels * cfg.grid * cfg.grid
        || !queries.len().is_multiple_of(cfg.trunk_input)
    {
        return Err(Error::Shape(
            "encoding or queries do not match the network".into(),
        ));
    }
    let t = |name: String| container.require(&name).map(|t| t.data.clone());
    let (k, stride, pad) = (cfg.kernel_size, cfg.stride, cfg.padding as isize);
    let mut act = encoding.to_vec();
    let mut channels = cfg.input_channels;
    let mut side = cfg.grid;
    let mut tags = cfg.branch_activations.iter();
    for (l, &out_ch) in cfg.conv_channels.iter().enumerate() {
        let w = t(format!("branch.conv{l}.weight"))?;
        let b = t(format!("branch.conv{l}.bias"))?;
        let out_side = (side + 2 * cfg.padding - k) / stride + 1;
        let mut out = vec![0.0; out_ch * out_side * out_side];
        for o in 0..out_ch {
            for y in 0..out_side {
                for x in 0..out_side {
                    let mut acc = b[o];
                    for c in 0..channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * stride + ky) as isize - pad;
                                let ix = (x * stride + kx) as isize - pad;
                                if iy < 0 || ix < 0 || iy as usize >= side || ix as usize >= side {
                                    continue;
                                }
                                acc += w[((o * channels + c) * k + ky) * k + kx]
                                    * act[(c * side + iy as usize) * side + ix as usize];
                            }
                        }
                    }
                    out[(o * out_side + y) * out_side + x] = acc;
                }
            }
        }
        tags.next().expect("validated").apply(&mut out);
        act = out;
        channels = out_ch;
        side = out_side;
    }
    let dense = |prefix: &str,
                 widths: &[usize],
                 tags: &mut dyn Iterator<Item = &Activation>,
                 mut x: Vec<f64>|
     -> Result<Vec<f64>> {
        for (l, &width) in widths.iter().enumerate() {
            let w = t(format!("{prefix}.fc{l}.weight"))?;
            let b = t(format!("{prefix}.fc{l}.bias"))?;
            let inputs = x.len();
            let mut y = vec![0.0; width];
            for o in 0..width {
                let mut acc = b[o];
                for i in 0..inputs {
                    acc += w[o * inputs + i] * x[i];
                }
                y[o] = acc;
            }
            tags.next().expect("validated").apply(&mut y);
            x = y;
        }
        Ok(x)
    };
    let branch = dense("branch", &cfg.branch_fc, &mut tags, act)?;
    let bias = if cfg.output_bias {
        t("bias".into())?[0]
    } else {
        0.0
    };
    queries
        .chunks_exact(cfg.trunk_input)
        .map(|q| {
            let trunk = dense(
                "trunk",
                &cfg.trunk_fc,
                &mut cfg.trunk_activations.iter(),
                q.to_vec(),
            )?;
            let mut acc = bias;
            for i in 0..trunk.len() {
                acc += branch[i] * trunk[i];
            }
            Ok(acc)
        })
        .collect()
}

/// Plant encodings on the network grid, `[channel][row][column]`.
fn broadcast(value: f64, n: usize) -> impl Iterator<Item = f64> {
    std::iter::repeat_n(value, n * n)
}

fn rows(c: &[f64]) -> impl Iterator<Item = f64> + '_ {
    c.iter().flat_map(move |&v| std::iter::repeat_n(v, c.len()))
}

fn check_grid(coeff: &CoefficientField, grid: usize) -> Result<()> {
    if coeff.grid().len() != grid {
        return Err(Error::Shape(format!(
            "network grid has {grid} points, coefficients have {}",
            coeff.grid().len()
        )));
    }
    Ok(())
}

/// Channels `[tau, f, c(s_i)]`.
pub fn encode_control(cfg: &PlantConfig, coeff: &CoefficientField) -> Vec<f64> {
    let n = coeff.grid().len();
    broadcast(cfg.tau, n)
        .chain(coeff.f.iter().copied())
        .chain(rows(&coeff.c))
        .collect()
}

/// Channels `[tau, h, f, c(s_i)]`.
pub fn encode_delay(cfg: &PlantConfig, coeff: &CoefficientField) -> Vec<f64> {
    let n = coeff.grid().len();
    broadcast(cfg.tau, n)
        .chain(broadcast(cfg.h, n))
        .chain(coeff.f.iter().copied())
        .chain(rows(&coeff.c))
        .collect()
}

/// Channels `[h, f]`.
pub fn encode_observer(cfg: &PlantConfig, coeff: &CoefficientField) -> Vec<f64> {
    let n = coeff.grid().len();
    broadcast(cfg.h, n).chain(coeff.f.iter().copied()).collect()
}

/// The networks needed to produce a [`GainProvider`]; any subset may be present.
#[derive(Debug, Clone, Default)]
pub struct NetworkSet {
    pub k: Option<DeepONetWeights>,
    pub l: Option<DeepONetWeights>,
    pub j: Option<DeepONetWeights>,
    pub q1: Option<DeepONetWeights>,
    pub q2: Option<DeepONetWeights>,
}

impl NetworkSet {
    /// Random full-size networks for all five operators.
    pub fn random(seed: u64) -> Result<Self> {
        Ok(Self {
            k: Some(DeepONetWeights::random(
                DeepONetConfig::control_kernel(),
                seed,
            )?),
            l: Some(DeepONetWeights::random(
                DeepONetConfig::delay_kernel(),
                seed + 1,
            )?),
            j: Some(DeepONetWeights::random(
                DeepONetConfig::delay_kernel(),
                seed + 2,
            )?),
            q1: Some(DeepONetWeights::random(
                DeepONetConfig::observer_gain(),
                seed + 3,
            )?),
            q2: Some(DeepONetWeights::random(
                DeepONetConfig::observer_gain(),
                seed + 4,
            )?),
        })
    }

    /// File name of each network inside a weights directory.
    pub const FILE_NAMES: [&'static str; 5] = ["K.pdon", "L.pdon", "J.pdon", "Q1.pdon", "Q2.pdon"];

    fn slots(&mut self) -> [&mut Option<DeepONetWeights>; 5] {
        [
            &mut self.k,
            &mut self.l,
            &mut self.j,
            &mut self.q1,
            &mut self.q2,
        ]
    }

    /// Loads whichever of the five network files exist in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut set = Self::default();
        for (slot, name) in set.slots().into_iter().zip(Self::FILE_NAMES) {
            let path = dir.join(name);
            if path.exists() {
                *slot = Some(DeepONetWeights::from_container(&Container::read(&path)?)?);
            }
        }
        if set.slots().iter().all(|s| s.is_none()) {
            return Err(Error::Config(format!(
                "no network files in {}",
                dir.display()
            )));
        }
        Ok(set)
    }

    /// Writes every present network to `dir`, returning the paths written.
    pub fn save_dir(
        &mut self,
        dir: impl AsRef<Path>,
        meta: &serde_json::Map<String, serde_json::Value>,
    ) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (slot, name) in self.slots().into_iter().zip(Self::FILE_NAMES) {
            if let Some(net) = slot {
                let mut c = net.to_container()?;
                c.meta.extend(meta.clone());
                let path = dir.join(name);
                c.write(&path)?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

fn need<'a>(net: &'a Option<DeepONetWeights>, name: &str) -> Result<&'a DeepONetWeights> {
    net.as_ref()
        .ok_or_else(|| Error::Config(format!("no network loaded for {name}")))
}

/// `K(0, q_j)`, `L(h r_j)`, `J(eta r_j)` on `grid` from the `K`, `L`, `J` networks.
pub fn control_gains_from_network(
    nets: &NetworkSet,
    cfg: &PlantConfig,
    grid: SpatialGrid,
) -> Result<ControlGains> {
    let (k, l, j) = (
        need(&nets.k, "K")?,
        need(&nets.l, "L")?,
        need(&nets.j, "J")?,
    );
    let coeff = eval_coefficients(cfg, SpatialGrid::with_intervals(k.config.grid - 1)?);
    check_grid(&coeff, l.config.grid)?;
    check_grid(&coeff, j.config.grid)?;
    let queries: Vec<f64> = grid.nodes().iter().flat_map(|&q| [0.0, q]).collect();
    let delay = encode_delay(cfg, &coeff);
    Ok(ControlGains {
        k0: k.forward(&encode_control(cfg, &coeff), &queries)?,
        l: l.forward(&delay, &queries)?,
        j: j.forward(&delay, &queries)?,
    })
}

/// `Q1(s_j)`, `Q2(s_j)` on `grid` from the observer-gain networks.
pub fn observer_gains_from_network(
    nets: &NetworkSet,
    cfg: &PlantConfig,
    grid: SpatialGrid,
) -> Result<ObserverGains> {
    let (q1, q2) = (need(&nets.q1, "Q1")?, need(&nets.q2, "Q2")?);
    let coeff = eval_coefficients(cfg, SpatialGrid::with_intervals(q1.config.grid - 1)?);
    check_grid(&coeff, q2.config.grid)?;
    let encoding = encode_observer(cfg, &coeff);
    let queries = grid.nodes();
    Ok(ObserverGains {
        q1: q1.forward(&encoding, &queries)?,
        q2: q2.forward(&encoding, &queries)?,
    })
}

/// Gains for the simulator from networks; observer gains are included when both nets exist.
pub fn gains_from_network(
    nets: &NetworkSet,
    cfg: &PlantConfig,
    grid: SpatialGrid,
) -> Result<GainProvider> {
    let control = control_gains_from_network(nets, cfg, grid)?;
    let observer = if nets.q1.is_some() || nets.q2.is_some() {
        Some(observer_gains_from_network(nets, cfg, grid)?)
    } else {
        None
    };
    Ok(GainProvider {
        kind: GainKind::Neural,
        control,
        observer,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainFamily {
    Control,
    Observer,
}

/// Mean wall time per gain computation, numerical solver versus network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub family: GainFamily,
    pub ds: f64,
    pub runs: usize,
    pub solver_seconds: f64,
    pub network_seconds: f64,
    pub speedup: f64,
}

/// Times both paths over `runs` repetitions cycling through `plants`.
pub fn bench_inference(
    nets: &NetworkSet,
    plants: &[PlantConfig],
    ds_list: &[f64],
    runs: usize,
    opts: &SolverOptions,
) -> Result<Vec<TimingRow>> {
    if plants.is_empty() || runs == 0 {
        return Err(Error::Config(
            "benchmark needs at least one plant and one run".into(),
        ));
    }
    let mut rows = Vec::new();
    for &ds in ds_list {
        let grid = SpatialGrid::new(ds)?;
        let time = |f: &mut dyn FnMut(&PlantConfig) -> Result<()>| -> Result<f64> {
            let start = Instant::now();
            for r in 0..runs {
                f(&plants[r % plants.len()])?;
            }
            Ok(start.elapsed().as_secs_f64() / runs as f64)
        };
        let control_solver = time(&mut |p| {
            let coeff = eval_coefficients(p, grid);
            let kernels = solve_control_kernels(p, &coeff, opts)?;
            black_box(ControlGains::from_kernels(&kernels));
            Ok(())
        })?;
        let control_net = time(&mut |p| {
            black_box(control_gains_from_network(nets, p, grid)?);
            Ok(())
        })?;
        let observer_solver = time(&mut |p| {
            let coeff = eval_coefficients(p, grid);
            black_box(observer_gains(p, &coeff, opts)?);
            Ok(())
        })?;
        let observer_net = time(&mut |p| {
            black_box(observer_gains_from_network(nets, p, grid)?);
            Ok(())
        })?;
        for (family, solver, net) in [
            (GainFamily::Control, control_solver, control_net),
            (GainFamily::Observer, observer_solver, observer_net),
        ] {
            rows.push(TimingRow {
                family,
                ds,
                runs,
                solver_seconds: solver,
                network_seconds: net,
                speedup: solver / net,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_size_parameter_counts() {
        assert_eq!(
            DeepONetConfig::control_kernel().parameter_count(),
            6_928_641
        );
        assert_eq!(DeepONetConfig::delay_kernel().parameter_count(), 6_930_241);
        assert_eq!(DeepONetConfig::observer_gain().parameter_count(), 6_926_913);
        assert_eq!(DeepONetConfig::control_kernel().flatten_dim(), 12_800);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let w = DeepONetWeights::zeros(DeepONetConfig::observer_gain()).unwrap();
        let out = w
            .forward(&vec![1.0; 2 * 51 * 51], &[0.0, 0.5, 1.0])
            .unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn shape_mismatch_rejected_before_compute() {
        let w = DeepONetWeights::zeros(DeepONetConfig::observer_gain()).unwrap();
        assert!(matches!(
            w.forward(&[0.0; 10], &[0.0]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(w.forward(&vec![0.0; 2 * 51 * 51], &[]), Ok(v) if v.is_empty()));
        let mut c = w.to_container().unwrap();
        c.meta.insert(
            CONFIG_KEY.into(),
            serde_json::to_value(DeepONetConfig::control_kernel()).unwrap(),
        );
        assert!(matches!(
            DeepONetWeights::from_container(&c),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn missing_network_is_a_config_error() {
        let nets = NetworkSet::default();
        let r =
            control_gains_from_network(&nets, &PlantConfig::reference(), SpatialGrid::training());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn encodings_have_grid_shapes() {
        let cfg = PlantConfig::reference();
        let coeff = eval_coefficients(&cfg, SpatialGrid::training());
        assert_eq!(encode_control(&cfg, &coeff).len(), 3 * 51 * 51);
        assert_eq!(encode_delay(&cfg, &coeff).len(), 4 * 51 * 51);
        assert_eq!(encode_observer(&cfg, &coeff).len(), 2 * 51 * 51);
        let enc = encode_control(&cfg, &coeff);
        // c channel is constant along each row
        assert_eq!(enc[2 * 2601 + 7 * 51 + 3], coeff.c[7]);
    }
}
