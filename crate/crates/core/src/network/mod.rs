//! Fully connected feed-forward network `z^l = W^l sigma_{l-1}(z^{l-1}) + b^l`.
//!
//! Three evaluation paths share one parameter container:
//!
//! * [`forward`] / [`forward_jet`]: single point, plain scalars;
//! * [`forward_jet_taped`]: single point on a [`Tape`], so gradients with
//!   respect to every weight flow through the input derivatives;
//! * [`batch`]: the fused batched pass used for training, which propagates
//!   value and input-derivative channels through one GEMM per layer and has a
//!   matching hand-written reverse pass.

pub mod batch;
mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Basis, Jet, Real, Tape, Var};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network needs at least one layer")]
    NoLayers,
    #[error("layer {layer} has zero width")]
    ZeroWidth { layer: usize },
    #[error("input dimension must be positive")]
    ZeroInput,
    #[error("output layer must be linear, found {0:?}")]
    OutputNotLinear(Activation),
    #[error("expected input of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Sin,
    Identity,
}

impl Activation {
    #[inline]
    pub fn eval<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.relu(),
            Activation::Sigmoid => x.sigmoid(),
            Activation::Tanh => x.tanh(),
            Activation::Sin => x.sin(),
            Activation::Identity => x,
        }
    }

    /// First derivative; ReLU uses 0 at the origin.
    #[inline]
    pub fn d1<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => {
                let s = x.sigmoid();
                s * (T::one() - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
            Activation::Sin => x.cos(),
            Activation::Identity => T::one(),
        }
    }

    #[inline]
    pub fn d2<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu | Activation::Identity => T::zero(),
            Activation::Sigmoid => {
                let s = x.sigmoid();
                s * (T::one() - s) * (T::one() - s - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                -(t + t) * (T::one() - t * t)
            }
            Activation::Sin => -x.sin(),
        }
    }

    /// Value, first and second derivative from one transcendental evaluation.
    #[inline]
    pub fn eval_d12<T: Scalar>(self, x: T) -> (T, T, T) {
        match self {
            Activation::Sin => {
                let (s, c) = x.sin_cos();
                (s, c, -s)
            }
            Activation::Sigmoid => {
                let s = x.sigmoid();
                let d1 = s * (T::one() - s);
                (s, d1, d1 * (T::one() - s - s))
            }
            Activation::Tanh => {
                let t = x.tanh();
                let d1 = T::one() - t * t;
                (t, d1, -(t + t) * d1)
            }
            Activation::Relu | Activation::Identity => (self.eval(x), self.d1(x), T::zero()),
        }
    }

    pub fn apply_jet<R: Real>(self, j: &Jet<R>) -> Jet<R> {
        match self {
            Activation::Relu => j.relu(),
            Activation::Sigmoid => j.sigmoid(),
            Activation::Tanh => j.tanh(),
            Activation::Sin => j.sin(),
            Activation::Identity => j.clone(),
        }
    }
}

/// Width and activation of one layer (hidden or output).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub const fn new(width: usize, activation: Activation) -> Self {
        LayerSpec { width, activation }
    }
}

/// One affine map followed by its activation. `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    #[inline]
    pub fn w(&self, j: usize, k: usize) -> T {
        self.weights[j * self.inputs + k]
    }
}

/// Named parameters of the differential equation being solved.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub names: Vec<String>,
    pub values: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(entries: &[(String, f64)]) -> Self {
        ModelParams {
            names: entries.iter().map(|(n, _)| n.clone()).collect(),
            values: entries.iter().map(|&(_, v)| T::lit(v)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<T> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.to_f64_lossy()).collect()
    }
}

/// Weights, biases and model parameters: every trainable leaf.
///
/// Leaves are ordered layer by layer (weights row-major, then biases),
/// followed by the model parameters. Flat gradients use the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    pub input_dim: usize,
    pub layers: Vec<Dense<T>>,
    pub model_params: ModelParams<T>,
}

/// Offsets of each parameter block inside a flat leaf vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub weights: Vec<usize>,
    pub biases: Vec<usize>,
    pub model: usize,
    pub len: usize,
}

impl Layout {
    pub fn network_len(&self) -> usize {
        self.model
    }
}

/// Input basis used for jets over network inputs of the given dimension.
pub const fn input_basis(dim: usize) -> Basis {
    Basis::new(0, dim)
}

fn validate_specs(input_dim: usize, specs: &[LayerSpec]) -> Result<(), NetworkError> {
    if input_dim == 0 {
        return Err(NetworkError::ZeroInput);
    }
    let last = specs.last().ok_or(NetworkError::NoLayers)?;
    if let Some(layer) = specs.iter().position(|s| s.width == 0) {
        return Err(NetworkError::ZeroWidth { layer });
    }
    if last.activation != Activation::Identity {
        return Err(NetworkError::OutputNotLinear(last.activation));
    }
    Ok(())
}

/// Scaled-uniform initialisation: `W ~ U(-s, s)` with
/// `s = sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_params<T: Scalar>(
    input_dim: usize,
    specs: &[LayerSpec],
    param_init: &[(String, f64)],
    seed: u64,
) -> Result<MlpParams<T>, NetworkError> {
    validate_specs(input_dim, specs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fan_in = input_dim;
    let mut layers = Vec::with_capacity(specs.len());
    for spec in specs {
        let fan_out = spec.width;
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = (0..fan_in * fan_out).map(|_| T::lit(rng.gen_range(-s..s))).collect();
        layers.push(Dense {
            inputs: fan_in,
            outputs: fan_out,
            weights,
            bias: vec![T::zero(); fan_out],
            activation: spec.activation,
        });
        fan_in = fan_out;
    }
    Ok(MlpParams { input_dim, layers, model_params: ModelParams::new(param_init) })
}

impl<T: Scalar> MlpParams<T> {
    /// Builds from explicit layers; checks the shape chain.
    pub fn from_layers(
        input_dim: usize,
        layers: Vec<Dense<T>>,
        model_params: ModelParams<T>,
    ) -> Result<Self, NetworkError> {
        let specs: Vec<_> = layers.iter().map(|l| LayerSpec::new(l.outputs, l.activation)).collect();
        validate_specs(input_dim, &specs)?;
        let mut fan_in = input_dim;
        for (i, l) in layers.iter().enumerate() {
            if l.inputs != fan_in || l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(NetworkError::Checkpoint(format!("layer {i} has inconsistent shape")));
            }
            fan_in = l.outputs;
        }
        Ok(MlpParams { input_dim, layers, model_params })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| LayerSpec::new(l.outputs, l.activation)).collect()
    }

    /// `(rows, cols)` of each weight matrix.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.outputs, l.inputs)).collect()
    }

    pub fn layout(&self) -> Layout {
        let mut off = 0;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in &self.layers {
            weights.push(off);
            off += l.weights.len();
            biases.push(off);
            off += l.bias.len();
        }
        Layout { weights, biases, model: off, len: off + self.model_params.len() }
    }

    pub fn num_leaves(&self) -> usize {
        self.layout().len
    }

    /// Mutable views of every leaf block in leaf order.
    pub fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &mut self.layers {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        out.push(&mut self.model_params.values);
        out
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_leaves());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out.extend_from_slice(&self.model_params.values);
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.num_leaves(), "flat parameter length");
        let mut off = 0;
        for block in self.blocks_mut() {
            let n = block.len();
            block.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    /// Human-readable name of a flat leaf index.
    pub fn leaf_label(&self, index: usize) -> String {
        let layout = self.layout();
        if index >= layout.model {
            let k = index - layout.model;
            return match self.model_params.names.get(k) {
                Some(name) => format!("model parameter {name}"),
                None => format!("leaf {index} (out of range)"),
            };
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let w = layout.weights[l];
            let b = layout.biases[l];
            if index < b {
                let r = index - w;
                return format!("layer {} weight[{}, {}]", l + 1, r / layer.inputs, r % layer.inputs);
            }
            if index < b + layer.outputs {
                return format!("layer {} bias[{}]", l + 1, index - b);
            }
        }
        unreachable!("leaf index below model offset must fall in a layer")
    }

    fn check_input(&self, len: usize) -> Result<(), NetworkError> {
        if len != self.input_dim {
            return Err(NetworkError::DimensionMismatch { expected: self.input_dim, got: len });
        }
        Ok(())
    }
}

/// Layer-by-layer evaluation of the network output.
pub fn forward<T: Scalar>(params: &MlpParams<T>, input: &[T]) -> Result<Vec<T>, NetworkError> {
    params.check_input(input.len())?;
    let mut a = input.to_vec();
    for layer in &params.layers {
        let z: Vec<T> = (0..layer.outputs)
            .map(|j| {
                let row = &layer.weights[j * layer.inputs..(j + 1) * layer.inputs];
                row.iter().zip(&a).fold(layer.bias[j], |acc, (&w, &x)| acc + w * x)
            })
            .collect();
        a = z.into_iter().map(|v| layer.activation.eval(v)).collect();
    }
    Ok(a)
}

/// One layer unpacked as `(weights, bias, inputs, outputs, activation)`.
type LayerParts<W> = (Vec<W>, Vec<W>, usize, usize, Activation);

fn jet_pass<R: Real>(params_layers: &[LayerParts<R>], inputs: Vec<Jet<R>>) -> Vec<Jet<R>> {
    let mut a = inputs;
    for (w, b, n_in, n_out, act) in params_layers {
        let mut next = Vec::with_capacity(*n_out);
        for j in 0..*n_out {
            let mut z = Jet::constant(a[0].basis, b[j]);
            for k in 0..*n_in {
                let wjk = w[j * n_in + k];
                z.value = z.value + wjk * a[k].value;
                for (d, &da) in z.d1.iter_mut().zip(&a[k].d1) {
                    *d = *d + wjk * da;
                }
            }
            next.push(act.apply_jet(&z));
        }
        a = next;
    }
    a
}

/// Output jets: values and partials of each output with respect to each input.
pub fn forward_jet<T: Scalar>(params: &MlpParams<T>, input: &[T]) -> Result<Vec<Jet<T>>, NetworkError> {
    params.check_input(input.len())?;
    let layers: Vec<_> =
        params.layers.iter().map(|l| (l.weights.clone(), l.bias.clone(), l.inputs, l.outputs, l.activation)).collect();
    let inputs = Jet::inputs(input_basis(input.len()), input).expect("basis matches input length");
    Ok(jet_pass(&layers, inputs))
}

/// Every leaf of `params` registered on a tape, `LeafId(i)` being flat leaf `i`.
pub struct TapedParams<'t, T> {
    layers: Vec<LayerParts<Var<'t, T>>>,
    pub model: Vec<Var<'t, T>>,
}

impl<T: Scalar> MlpParams<T> {
    pub fn register<'t>(&self, tape: &'t Tape<T>) -> TapedParams<'t, T> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let w = l.weights.iter().map(|&v| tape.leaf(v)).collect();
                let b = l.bias.iter().map(|&v| tape.leaf(v)).collect();
                (w, b, l.inputs, l.outputs, l.activation)
            })
            .collect();
        let model = self.model_params.values.iter().map(|&v| tape.leaf(v)).collect();
        TapedParams { layers, model }
    }
}

/// Tape-recorded jet evaluation; input coordinates are tape constants.
pub fn forward_jet_taped<'t, T: Scalar>(
    taped: &TapedParams<'t, T>,
    tape: &'t Tape<T>,
    input: &[T],
) -> Result<Vec<Jet<Var<'t, T>>>, NetworkError> {
    let expected = taped.layers.first().map_or(0, |l| l.2);
    if input.len() != expected {
        return Err(NetworkError::DimensionMismatch { expected, got: input.len() });
    }
    let coords: Vec<_> = input.iter().map(|&x| tape.constant(x)).collect();
    let inputs = Jet::inputs(input_basis(input.len()), &coords).expect("basis matches input length");
    Ok(jet_pass(&taped.layers, inputs))
}
