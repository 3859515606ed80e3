//! Pointwise multilayer perceptron with reverse-mode gradients, Adam and a
//! step-decay learning-rate schedule.

use std::io::Cursor;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_atomic, LeReader, LeWriter};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"ARPM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    fn id(self) -> u32 {
        match self {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        }
    }

    fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub hidden_activation: Activation,
}

impl MlpSpec {
    /// Five tanh hidden layers of width 32 over an `input_dim` history.
    pub fn forecaster(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![32; 5],
            output_dim: 1,
            hidden_activation: Activation::Tanh,
        }
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims
    }

    pub fn n_params(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("zero-width layer in {self:?}")));
        }
        Ok(())
    }
}

/// Affine layer `y = x W + b` with `W` shaped `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

/// Gradients with the same layout as [`Mlp`] parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Layer::zeros(l.weights.nrows(), l.weights.ncols()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weights.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Activations recorded by [`Mlp::forward_cached`] for a later backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    /// Post-activation output of every layer; the last entry is the model output.
    outputs: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("at least one layer")
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..limit)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn from_layers(spec: MlpSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        if dims.len() != layers.len()
            || dims
                .iter()
                .zip(&layers)
                .any(|(&(i, o), l)| l.weights.dim() != (i, o) || l.bias.len() != o)
        {
            return Err(Error::ShapeMismatch {
                expected: format!("layers {dims:?}"),
                actual: format!(
                    "layers {:?}",
                    layers.iter().map(|l| l.weights.dim()).collect::<Vec<_>>()
                ),
            });
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weights.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn check_input(&self, batch: &ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.spec.input_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{} input columns", self.spec.input_dim),
                actual: format!("{} columns", batch.ncols()),
            });
        }
        Ok(())
    }

    fn activate(&self, z: &mut Array2<f64>, is_output: bool) {
        if !is_output && self.spec.hidden_activation == Activation::Tanh {
            z.mapv_inplace(f64::tanh);
        }
    }

    /// Row-wise model output, shaped `B × output_dim`.
    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&batch)?;
        let last = self.layers.len() - 1;
        let mut a: Option<Array2<f64>> = None;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = match &a {
                None => batch.dot(&layer.weights),
                Some(prev) => prev.dot(&layer.weights),
            };
            z += &layer.bias;
            self.activate(&mut z, li == last);
            a = Some(z);
        }
        Ok(a.expect("at least one layer"))
    }

    pub fn forward_cached(&self, batch: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&batch)?;
        let last = self.layers.len() - 1;
        let input = batch.to_owned();
        let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let prev = outputs.last().unwrap_or(&input);
            let mut z = prev.dot(&layer.weights);
            z += &layer.bias;
            self.activate(&mut z, li == last);
            outputs.push(z);
        }
        Ok(ForwardCache { input, outputs })
    }

    /// Gradient of `Σ_b Σ_o upstream[b, o] · forward[b, o]` with respect to
    /// the parameters, accumulated into `grads`. Returns the gradient with
    /// respect to the input batch when `want_input` is set.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<f64>,
        grads: &mut Gradients,
        want_input: bool,
    ) -> Result<Option<Array2<f64>>> {
        if upstream.dim() != cache.output().dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("upstream {:?}", cache.output().dim()),
                actual: format!("{:?}", upstream.dim()),
            });
        }
        let last = self.layers.len() - 1;
        let mut delta = upstream.to_owned();
        for li in (0..self.layers.len()).rev() {
            if li != last && self.spec.hidden_activation == Activation::Tanh {
                delta.zip_mut_with(&cache.outputs[li], |d, &a| *d *= 1.0 - a * a);
            }
            let prev = if li == 0 { &cache.input } else { &cache.outputs[li - 1] };
            let g = &mut grads.layers[li];
            ndarray::linalg::general_mat_mul(1.0, &prev.t(), &delta, 1.0, &mut g.weights);
            g.bias += &delta.sum_axis(Axis(0));
            if li > 0 || want_input {
                delta = delta.dot(&self.layers[li].weights.t());
            }
        }
        Ok(want_input.then_some(delta))
    }

    pub fn backward(&self, batch: ArrayView2<f64>, upstream: ArrayView2<f64>) -> Result<Gradients> {
        let cache = self.forward_cached(batch)?;
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(&cache, upstream, &mut grads, false)?;
        Ok(grads)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = LeWriter(Vec::new());
        w.0.extend_from_slice(&CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION)?;
        w.u32(self.spec.input_dim as u32)?;
        w.u32(self.spec.hidden_dims.len() as u32)?;
        for &h in &self.spec.hidden_dims {
            w.u32(h as u32)?;
        }
        w.u32(self.spec.output_dim as u32)?;
        w.u32(self.spec.hidden_activation.id())?;
        for l in &self.layers {
            w.f64s(l.weights.as_slice().expect("standard layout"))?;
            w.f64s(l.bias.as_slice().expect("standard layout"))?;
        }
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = LeReader::new(Cursor::new(bytes), "model checkpoint");
        let magic: [u8; 4] = r.bytes()?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected \"ARPM\"")));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let input_dim = r.u32()? as usize;
        let n_hidden = r.u32()? as usize;
        if n_hidden > 1024 {
            return Err(Error::Format(format!("implausible hidden layer count {n_hidden}")));
        }
        let hidden_dims = (0..n_hidden).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let output_dim = r.u32()? as usize;
        let act = r.u32()?;
        let hidden_activation =
            Activation::from_id(act).ok_or_else(|| Error::Format(format!("unknown activation id {act}")))?;
        let spec = MlpSpec {
            input_dim,
            hidden_dims,
            output_dim,
            hidden_activation,
        };
        spec.validate().map_err(|e| Error::Format(e.to_string()))?;
        let mut layers = Vec::new();
        for (fan_in, fan_out) in spec.layer_dims() {
            let w = r.f64s(fan_in * fan_out)?;
            let b = r.f64s(fan_out)?;
            layers.push(Layer {
                weights: Array2::from_shape_vec((fan_in, fan_out), w).expect("sized read"),
                bias: Array1::from_vec(b),
            });
        }
        r.finish()?;
        Self::from_layers(spec, layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub base_lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            decay_factor: 0.9,
            decay_every: 50,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    /// `base_lr · decay_factor^floor(epoch / decay_every)`
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = if self.decay_every == 0 { 0 } else { epoch / self.decay_every };
        self.base_lr * self.decay_factor.powi(drops as i32)
    }
}

/// Adam moments over a list of parameter groups.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, group_sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_model(config: AdamConfig, model: &Mlp) -> Self {
        let sizes: Vec<usize> = model.param_slices().iter().map(|s| s.len()).collect();
        Self::new(config, &sizes)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// One bias-corrected Adam update at the learning rate scheduled for `epoch`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], epoch: usize) -> Result<()> {
        if params.len() != self.m.len()
            || grads.len() != self.m.len()
            || params.iter().zip(grads).zip(&self.m).any(|((p, g), m)| p.len() != m.len() || g.len() != m.len())
        {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameter groups", self.m.len()),
                actual: format!("{} params / {} grads", params.len(), grads.len()),
            });
        }
        if let Some(group) = grads.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteGradient(group));
        }
        let c = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let lr = c.lr_at(epoch);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}
