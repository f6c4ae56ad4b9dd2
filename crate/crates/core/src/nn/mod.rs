//! Small differentiable networks in `f64`.
//!
//! A [`Network`] is an ordered list of [`Layer`]s evaluated front to back. Besides
//! dense layers and element-wise activations it supports layer normalization and
//! explicit residual additions ([`Layer::SkipAdd`]) that add the output of an
//! earlier layer to the current activation. Parameters are exposed as one flat
//! vector in layer order (dense: weights row-major then bias; layer-norm: gain then
//! bias), which is also the order used by the optimizer and checkpoints.

mod adam;
mod checkpoint;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};

use rand::Rng;

use crate::error::{Error, Result};

/// Denominator floor for layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Fully connected affine map `y = W x + b`, `W` stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config("dense layer dimensions must be > 0".into()));
        }
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::Config(format!(
                "dense({in_dim},{out_dim}) expects {} weights and {out_dim} biases, got {} and {}",
                in_dim * out_dim,
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Config("dense layer parameters must be finite".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config("dense layer dimensions must be > 0".into()));
        }
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim).map(|_| rng.random_range(-bound..bound)).collect();
        let bias = (0..out_dim).map(|_| rng.random_range(-bound..bound)).collect();
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }
}

/// Learnable affine parameters of a layer-normalization node.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormLayer {
    gain: Vec<f64>,
    bias: Vec<f64>,
}

impl LayerNormLayer {
    pub fn new(dim: usize) -> Self {
        Self {
            gain: vec![1.0; dim],
            bias: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.gain.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Relu,
    Tanh,
    LayerNorm(LayerNormLayer),
    /// Adds the output of layer `from` (which must precede this node) to the
    /// current activation.
    SkipAdd {
        from: usize,
    },
}

impl Layer {
    fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weights.len() + d.bias.len(),
            Layer::LayerNorm(n) => 2 * n.dim(),
            _ => 0,
        }
    }

    fn descriptor(&self) -> String {
        match self {
            Layer::Dense(d) => format!("dense({},{})", d.in_dim, d.out_dim),
            Layer::Relu => "relu".into(),
            Layer::Tanh => "tanh".into(),
            Layer::LayerNorm(n) => format!("layernorm({})", n.dim()),
            Layer::SkipAdd { from } => format!("skip({from})"),
        }
    }
}

/// Standardizes `x` to zero mean and unit variance, then applies `gain` and `bias`.
///
/// The standard deviation is floored at `sqrt(LAYER_NORM_EPS)`, so constant inputs
/// map to `bias` and inputs with variance above the floor are standardized exactly.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let (xhat, _) = standardize(x);
    xhat.iter().zip(gain).zip(bias).map(|((v, g), b)| v * g + b).collect()
}

fn standardize(x: &[f64]) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.max(LAYER_NORM_EPS).sqrt();
    (x.iter().map(|v| (v - mean) / std).collect(), std)
}

/// Gradients from one backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Flat parameter gradient in the same order as [`Network::params`].
    pub params: Vec<f64>,
    /// Gradient with respect to the network input.
    pub input: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Trace {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Vec<f64>>,
    /// Per layer-norm node: standardized activations and the divisor used.
    norms: Vec<Option<(Vec<f64>, f64)>>,
}

#[derive(Debug, Clone)]
pub struct Network {
    input_dim: usize,
    output_dim: usize,
    layers: Vec<Layer>,
    cache: Option<Trace>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input_dim == other.input_dim && self.layers == other.layers
    }
}

impl Network {
    /// Validates layer wiring and builds the network.
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("network input dimension must be > 0".into()));
        }
        let mut dims = Vec::with_capacity(layers.len());
        let mut cur = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            cur = match layer {
                Layer::Dense(d) => {
                    if d.in_dim != cur {
                        return Err(Error::Config(format!(
                            "layer {i}: dense expects input {} but receives {cur}",
                            d.in_dim
                        )));
                    }
                    d.out_dim
                }
                Layer::Relu | Layer::Tanh => cur,
                Layer::LayerNorm(n) => {
                    if n.dim() != cur || cur < 2 {
                        return Err(Error::Config(format!(
                            "layer {i}: layernorm({}) on input of size {cur}",
                            n.dim()
                        )));
                    }
                    cur
                }
                Layer::SkipAdd { from } => {
                    if *from >= i {
                        return Err(Error::Config(format!(
                            "layer {i}: skip source {from} must precede the consuming layer"
                        )));
                    }
                    if dims[*from] != cur {
                        return Err(Error::Config(format!(
                            "layer {i}: skip source {from} has size {} but activation has {cur}",
                            dims[*from]
                        )));
                    }
                    cur
                }
            };
            dims.push(cur);
        }
        Ok(Self {
            input_dim,
            output_dim: cur,
            layers,
            cache: None,
        })
    }

    /// Builds a network from its textual descriptor with freshly initialized weights.
    pub fn from_descriptor<R: Rng + ?Sized>(descriptor: &str, rng: &mut R) -> Result<Self> {
        let mut parts = descriptor.split(';');
        let head = parts.next().unwrap_or_default();
        let input_dim = head
            .strip_prefix("in=")
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| Error::Config(format!("bad descriptor head `{head}`")))?;
        let mut layers = Vec::new();
        for part in parts {
            let bad = || Error::Config(format!("bad layer descriptor `{part}`"));
            let layer = if part == "relu" {
                Layer::Relu
            } else if part == "tanh" {
                Layer::Tanh
            } else if let Some(args) = part.strip_prefix("dense(").and_then(|r| r.strip_suffix(')')) {
                let (a, b) = args.split_once(',').ok_or_else(bad)?;
                let a = a.trim().parse().map_err(|_| bad())?;
                let b = b.trim().parse().map_err(|_| bad())?;
                Layer::Dense(DenseLayer::init(a, b, rng)?)
            } else if let Some(arg) = part.strip_prefix("layernorm(").and_then(|r| r.strip_suffix(')')) {
                Layer::LayerNorm(LayerNormLayer::new(arg.trim().parse().map_err(|_| bad())?))
            } else if let Some(arg) = part.strip_prefix("skip(").and_then(|r| r.strip_suffix(')')) {
                Layer::SkipAdd {
                    from: arg.trim().parse().map_err(|_| bad())?,
                }
            } else {
                return Err(bad());
            };
            layers.push(layer);
        }
        Self::new(input_dim, layers)
    }

    /// Textual architecture descriptor, e.g. `in=3;dense(3,128);relu;dense(128,1)`.
    pub fn descriptor(&self) -> String {
        std::iter::once(format!("in={}", self.input_dim))
            .chain(self.layers.iter().map(Layer::descriptor))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.extend_from_slice(&d.weights);
                    out.extend_from_slice(&d.bias);
                }
                Layer::LayerNorm(n) => {
                    out.extend_from_slice(&n.gain);
                    out.extend_from_slice(&n.bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut rest = params;
        for slice in self.param_slices_mut() {
            let (head, tail) = rest.split_at(slice.len());
            slice.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weights.as_mut_slice());
                    out.push(d.bias.as_mut_slice());
                }
                Layer::LayerNorm(n) => {
                    out.push(n.gain.as_mut_slice());
                    out.push(n.bias.as_mut_slice());
                }
                _ => {}
            }
        }
        out
    }

    /// Applies `f(param, value)` to every parameter alongside a flat slice.
    pub(crate) fn zip_params_mut(&mut self, values: &[f64], mut f: impl FnMut(&mut f64, f64)) {
        let mut i = 0;
        for slice in self.param_slices_mut() {
            for p in slice.iter_mut() {
                f(p, values[i]);
                i += 1;
            }
        }
    }

    /// Pure evaluation; does not touch the backward cache.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.run(input)?.acts.pop().unwrap_or_default())
    }

    /// Evaluates and caches intermediate activations for a following [`backward`](Self::backward).
    pub fn forward_train(&mut self, input: &[f64]) -> Result<Vec<f64>> {
        let trace = self.run(input)?;
        let out = trace.acts.last().cloned().unwrap_or_default();
        self.cache = Some(trace);
        Ok(out)
    }

    fn run(&self, input: &[f64]) -> Result<Trace> {
        if input.len() != self.input_dim {
            return Err(Error::Config(format!(
                "network expects input of size {}, got {}",
                self.input_dim,
                input.len()
            )));
        }
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        let mut norms = Vec::with_capacity(self.layers.len());
        acts.push(input.to_vec());
        for layer in &self.layers {
            let x = acts.last().expect("input pushed above");
            let mut norm = None;
            let y = match layer {
                Layer::Dense(d) => d.apply(x),
                Layer::Relu => x.iter().map(|v| v.max(0.0)).collect(),
                Layer::Tanh => x.iter().map(|v| v.tanh()).collect(),
                Layer::LayerNorm(n) => {
                    let (xhat, std) = standardize(x);
                    let y = xhat
                        .iter()
                        .zip(&n.gain)
                        .zip(&n.bias)
                        .map(|((v, g), b)| v * g + b)
                        .collect();
                    norm = Some((xhat, std));
                    y
                }
                Layer::SkipAdd { from } => x.iter().zip(&acts[from + 1]).map(|(a, b)| a + b).collect(),
            };
            norms.push(norm);
            acts.push(y);
        }
        Ok(Trace { acts, norms })
    }

    /// Back-propagates `output_grad` through the activations cached by the last
    /// [`forward_train`](Self::forward_train). The cache is consumed.
    pub fn backward(&mut self, output_grad: &[f64]) -> Result<Gradients> {
        let trace = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("backward called without a preceding forward_train".into()))?;
        if output_grad.len() != self.output_dim {
            return Err(Error::Config(format!(
                "output gradient has size {}, network output is {}",
                output_grad.len(),
                self.output_dim
            )));
        }
        let n_layers = self.layers.len();
        // Gradient contributions routed through skip connections, per activation index.
        let mut pending: Vec<Option<Vec<f64>>> = vec![None; n_layers + 1];
        let mut param_grads: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
        let mut g = output_grad.to_vec();

        for i in (0..n_layers).rev() {
            if let Some(extra) = pending[i + 1].take() {
                g.iter_mut().zip(extra).for_each(|(a, b)| *a += b);
            }
            let x = &trace.acts[i];
            g = match &self.layers[i] {
                Layer::Dense(d) => {
                    let mut pg = vec![0.0; d.weights.len() + d.out_dim];
                    let (gw, gb) = pg.split_at_mut(d.weights.len());
                    let mut gx = vec![0.0; d.in_dim];
                    for (o, go) in g.iter().enumerate() {
                        if *go == 0.0 {
                            continue;
                        }
                        let row = &d.weights[o * d.in_dim..(o + 1) * d.in_dim];
                        let grow = &mut gw[o * d.in_dim..(o + 1) * d.in_dim];
                        for j in 0..d.in_dim {
                            grow[j] = go * x[j];
                            gx[j] += go * row[j];
                        }
                        gb[o] = *go;
                    }
                    param_grads[i] = pg;
                    gx
                }
                Layer::Relu => g
                    .iter()
                    .zip(x)
                    .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                    .collect(),
                Layer::Tanh => {
                    let y = &trace.acts[i + 1];
                    g.iter().zip(y).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect()
                }
                Layer::LayerNorm(n) => {
                    let (xhat, std) = trace.norms[i].as_ref().expect("layernorm trace");
                    let dim = n.dim();
                    let mut pg = vec![0.0; 2 * dim];
                    let dxhat: Vec<f64> = g.iter().zip(&n.gain).map(|(a, b)| a * b).collect();
                    for k in 0..dim {
                        pg[k] = g[k] * xhat[k];
                        pg[dim + k] = g[k];
                    }
                    param_grads[i] = pg;
                    let nf = dim as f64;
                    let mean_d = dxhat.iter().sum::<f64>() / nf;
                    let floored = {
                        let mean = x.iter().sum::<f64>() / nf;
                        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
                        var < LAYER_NORM_EPS
                    };
                    if floored {
                        dxhat.iter().map(|d| (d - mean_d) / std).collect()
                    } else {
                        let mean_dx = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / nf;
                        dxhat
                            .iter()
                            .zip(xhat)
                            .map(|(d, xh)| (d - mean_d - xh * mean_dx) / std)
                            .collect()
                    }
                }
                Layer::SkipAdd { from } => {
                    let slot = &mut pending[from + 1];
                    match slot {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        None => *slot = Some(g.clone()),
                    }
                    g
                }
            };
        }

        Ok(Gradients {
            params: param_grads.into_iter().flatten().collect(),
            input: g,
        })
    }

    /// Polyak update `self ← tau·online + (1 − tau)·self`.
    pub fn soft_update_from(&mut self, online: &Network, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Config(format!("soft-update rate {tau} outside [0, 1]")));
        }
        if self.descriptor() != online.descriptor() {
            return Err(Error::Config(format!(
                "architecture mismatch: `{}` vs `{}`",
                self.descriptor(),
                online.descriptor()
            )));
        }
        let src = online.params();
        self.zip_params_mut(&src, |t, o| *t += tau * (o - *t));
        Ok(())
    }

    /// Hard copy of all parameters from `online`.
    pub fn copy_from(&mut self, online: &Network) -> Result<()> {
        if self.descriptor() != online.descriptor() {
            return Err(Error::Config(format!(
                "architecture mismatch: `{}` vs `{}`",
                self.descriptor(),
                online.descriptor()
            )));
        }
        self.layers.clone_from(&online.layers);
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            header: self.descriptor(),
            params: self.params(),
        }
    }

    /// Rebuilds a network from a checkpoint, optionally requiring a specific architecture.
    pub fn from_checkpoint(ck: &Checkpoint, expected: Option<&str>) -> Result<Self> {
        if let Some(want) = expected {
            if want != ck.header {
                return Err(Error::Checkpoint(format!(
                    "architecture mismatch: checkpoint has `{}`, expected `{want}`",
                    ck.header
                )));
            }
        }
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut net = Self::from_descriptor(&ck.header, &mut rng).map_err(|e| Error::Checkpoint(e.to_string()))?;
        net.set_params(&ck.params)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(net)
    }
}

/// Free-function form of [`Network::soft_update_from`].
pub fn soft_update(target: &mut Network, online: &Network, tau: f64) -> Result<()> {
    target.soft_update_from(online, tau)
}

/// Chainable constructor for common layer stacks.
pub struct NetworkBuilder {
    input_dim: usize,
    current: usize,
    specs: Vec<Spec>,
}

enum Spec {
    Dense(usize, usize),
    Relu,
    Tanh,
    LayerNorm(usize),
    Skip(usize),
}

impl NetworkBuilder {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            current: input_dim,
            specs: Vec::new(),
        }
    }

    pub fn dense(mut self, out: usize) -> Self {
        self.specs.push(Spec::Dense(self.current, out));
        self.current = out;
        self
    }

    pub fn relu(mut self) -> Self {
        self.specs.push(Spec::Relu);
        self
    }

    pub fn tanh(mut self) -> Self {
        self.specs.push(Spec::Tanh);
        self
    }

    pub fn layer_norm(mut self) -> Self {
        self.specs.push(Spec::LayerNorm(self.current));
        self
    }

    /// Residual add of the output of layer index `from`.
    pub fn skip_add(mut self, from: usize) -> Self {
        self.specs.push(Spec::Skip(from));
        self
    }

    pub fn build<R: Rng + ?Sized>(self, rng: &mut R) -> Result<Network> {
        let layers = self
            .specs
            .into_iter()
            .map(|s| {
                Ok(match s {
                    Spec::Dense(i, o) => Layer::Dense(DenseLayer::init(i, o, rng)?),
                    Spec::Relu => Layer::Relu,
                    Spec::Tanh => Layer::Tanh,
                    Spec::LayerNorm(d) => Layer::LayerNorm(LayerNormLayer::new(d)),
                    Spec::Skip(from) => Layer::SkipAdd { from },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(self.input_dim, layers)
    }
}
