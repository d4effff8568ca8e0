//! Fused batched evaluation with input-derivative channels and its reverse pass.
//!
//! Rows of every activation matrix are stacked by channel: rows `0..B` hold
//! the values for the `B` samples, rows `c*B..(c+1)*B` hold the derivative of
//! the same quantities with respect to input coordinate `c-1`. Through an
//! affine layer all channels share the weight matrix, so one GEMM advances
//! every channel; only the value channel receives the bias. Through an
//! activation the derivative channels pick up `sigma'(z)`.
//!
//! The reverse pass consumes seeds `dL/d(output)` for every channel and
//! accumulates `dL/dW`, `dL/db` into a flat gradient laid out like
//! [`MlpParams::to_flat`](super::MlpParams::to_flat).

use super::{Activation, MlpParams};
use crate::autodiff::Real;
use crate::scalar::Scalar;

/// Cached activations of one batched pass, reused across calls.
#[derive(Debug, Clone, Default)]
pub struct BatchPass<T> {
    batch: usize,
    channels: usize,
    input: Vec<T>,
    pre: Vec<Vec<T>>,
    post: Vec<Vec<T>>,
    /// `sigma'(z)` of the value channel, per layer (empty for identity and ReLU).
    slope: Vec<Vec<T>>,
    /// `sigma''(z)` of the value channel, kept when derivative channels exist.
    curve: Vec<Vec<T>>,
    delta: Vec<T>,
    delta_prev: Vec<T>,
}

impl<T: Scalar> BatchPass<T> {
    pub fn new() -> Self {
        BatchPass {
            batch: 0,
            channels: 1,
            input: Vec::new(),
            pre: Vec::new(),
            post: Vec::new(),
            slope: Vec::new(),
            curve: Vec::new(),
            delta: Vec::new(),
            delta_prev: Vec::new(),
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// 1 (values only) or 1 + input dimension (values and input derivatives).
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Network outputs, `channels * batch` rows of `output_dim` entries.
    pub fn outputs(&self) -> &[T] {
        self.post.last().map_or(&[], |v| v.as_slice())
    }

    /// Output `j` of sample `s` in channel `c` (0 = value, `i+1` = d/d input_i).
    #[inline]
    pub fn output(&self, c: usize, s: usize, j: usize, output_dim: usize) -> T {
        self.outputs()[(c * self.batch + s) * output_dim + j]
    }
}

/// Forward pass for `batch` samples stored row-major in `inputs`.
///
/// With `with_jets` the input derivatives of every output are propagated too.
pub fn forward_batch<T: Scalar>(params: &MlpParams<T>, inputs: &[T], with_jets: bool, pass: &mut BatchPass<T>) {
    let d_in = params.input_dim;
    assert_eq!(inputs.len() % d_in, 0, "input buffer not a multiple of input dimension");
    let batch = inputs.len() / d_in;
    let channels = if with_jets { 1 + d_in } else { 1 };
    let rows = channels * batch;
    pass.batch = batch;
    pass.channels = channels;

    pass.input.clear();
    pass.input.resize(rows * d_in, T::zero());
    pass.input[..batch * d_in].copy_from_slice(inputs);
    for c in 1..channels {
        for s in 0..batch {
            pass.input[(c * batch + s) * d_in + (c - 1)] = T::one();
        }
    }

    let n_layers = params.layers.len();
    pass.pre.resize_with(n_layers, Vec::new);
    pass.post.resize_with(n_layers, Vec::new);
    pass.slope.resize_with(n_layers, Vec::new);
    pass.curve.resize_with(n_layers, Vec::new);
    for (l, layer) in params.layers.iter().enumerate() {
        let (n_in, n_out) = (layer.inputs, layer.outputs);
        let (before, after) = pass.post.split_at_mut(l);
        let prev: &[T] = if l == 0 { &pass.input } else { &before[l - 1] };
        let z = &mut pass.pre[l];
        // Fully overwritten by the GEMM (beta = 0) and the activation below.
        z.resize(rows * n_out, T::zero());
        // Z = A_prev * W^T
        T::gemm(
            rows,
            n_in,
            n_out,
            T::one(),
            prev,
            n_in as isize,
            1,
            &layer.weights,
            1,
            n_in as isize,
            T::zero(),
            z,
            n_out as isize,
            1,
        );
        for s in 0..batch {
            for (v, &b) in z[s * n_out..(s + 1) * n_out].iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        let a = &mut after[0];
        a.resize(rows * n_out, T::zero());
        let derivs = (&mut pass.slope[l], &mut pass.curve[l]);
        activate_forward(layer.activation, z, a, derivs, batch, channels, n_out);
    }
}

fn activate_forward<T: Scalar>(
    act: Activation,
    z: &[T],
    a: &mut [T],
    (slope, curve): (&mut Vec<T>, &mut Vec<T>),
    batch: usize,
    channels: usize,
    width: usize,
) {
    let n = batch * width;
    if act == Activation::Identity {
        a.copy_from_slice(z);
        return;
    }
    let (zv, zd) = z.split_at(n);
    let (av, ad) = a.split_at_mut(n);
    if act == Activation::Relu {
        for (o, &x) in av.iter_mut().zip(zv) {
            *o = x.relu();
        }
        for (adc, zdc) in ad.chunks_exact_mut(n).zip(zd.chunks_exact(n)) {
            for ((o, &d), &x) in adc.iter_mut().zip(zdc).zip(zv) {
                *o = if x > T::zero() { d } else { T::zero() };
            }
        }
        return;
    }
    // Fully overwritten below.
    slope.resize(n, T::zero());
    if channels == 1 {
        for ((o, s), &x) in av.iter_mut().zip(slope.iter_mut()).zip(zv) {
            let (f, d1, _) = act.eval_d12(x);
            *o = f;
            *s = d1;
        }
        return;
    }
    curve.resize(n, T::zero());
    for i in 0..n {
        let (f, d1, d2) = act.eval_d12(zv[i]);
        av[i] = f;
        slope[i] = d1;
        curve[i] = d2;
    }
    for (adc, zdc) in ad.chunks_exact_mut(n).zip(zd.chunks_exact(n)) {
        for ((o, &d), &s) in adc.iter_mut().zip(zdc).zip(slope.iter()) {
            *o = s * d;
        }
    }
}

/// Reverse pass. `seed` holds `dL/d(output)` in the layout of
/// [`BatchPass::outputs`]; gradients are added into `grad`.
pub fn backward_batch<T: Scalar>(params: &MlpParams<T>, pass: &mut BatchPass<T>, seed: &[T], grad: &mut [T]) {
    let layout = params.layout();
    assert!(grad.len() >= layout.network_len(), "gradient buffer too short");
    let batch = pass.batch;
    let channels = pass.channels;
    let rows = channels * batch;
    let n_layers = params.layers.len();
    assert_eq!(seed.len(), rows * params.output_dim(), "seed shape");

    let mut delta = std::mem::take(&mut pass.delta);
    let mut delta_prev = std::mem::take(&mut pass.delta_prev);
    delta.clear();
    delta.extend_from_slice(seed);

    for l in (0..n_layers).rev() {
        let layer = &params.layers[l];
        let (n_in, n_out) = (layer.inputs, layer.outputs);
        let prev: &[T] = if l == 0 { &pass.input } else { &pass.post[l - 1] };

        // dW += delta^T * A_prev
        let w_off = layout.weights[l];
        T::gemm(
            n_out,
            rows,
            n_in,
            T::one(),
            &delta,
            1,
            n_out as isize,
            prev,
            n_in as isize,
            1,
            T::one(),
            &mut grad[w_off..w_off + n_out * n_in],
            n_in as isize,
            1,
        );
        // db += column sums of the value channel
        let b_off = layout.biases[l];
        for s in 0..batch {
            for (g, &d) in grad[b_off..b_off + n_out].iter_mut().zip(&delta[s * n_out..(s + 1) * n_out]) {
                *g += d;
            }
        }
        if l == 0 {
            break;
        }
        // dA_prev = delta * W
        delta_prev.resize(rows * n_in, T::zero());
        T::gemm(
            rows,
            n_out,
            n_in,
            T::one(),
            &delta,
            n_out as isize,
            1,
            &layer.weights,
            n_in as isize,
            1,
            T::zero(),
            &mut delta_prev,
            n_in as isize,
            1,
        );
        let act = params.layers[l - 1].activation;
        let derivs = (pass.slope[l - 1].as_slice(), pass.curve[l - 1].as_slice());
        activate_backward(act, &pass.pre[l - 1], derivs, &mut delta_prev, batch, n_in);
        std::mem::swap(&mut delta, &mut delta_prev);
    }
    pass.delta = delta;
    pass.delta_prev = delta_prev;
}

/// Converts `dL/dA` into `dL/dZ` in place for one activation layer, using
/// the derivatives cached by the forward pass.
fn activate_backward<T: Scalar>(
    act: Activation,
    z: &[T],
    (slope, curve): (&[T], &[T]),
    da: &mut [T],
    batch: usize,
    width: usize,
) {
    if act == Activation::Identity {
        return;
    }
    let n = batch * width;
    let (zv, zd) = z.split_at(n);
    let (dav, dad) = da.split_at_mut(n);
    if act == Activation::Relu {
        for dc in std::iter::once(dav).chain(dad.chunks_exact_mut(n)) {
            for (d, &x) in dc.iter_mut().zip(zv) {
                *d = if x > T::zero() { *d } else { T::zero() };
            }
        }
        return;
    }
    for (d, &s) in dav.iter_mut().zip(slope) {
        *d *= s;
    }
    // A derivative channel carries sigma'(z) dz, so it also feeds the value
    // channel through sigma''(z).
    for (dc, zc) in dad.chunks_exact_mut(n).zip(zd.chunks_exact(n)) {
        for ((((d, &x), v), &s), &k) in dc.iter_mut().zip(zc).zip(dav.iter_mut()).zip(slope).zip(curve) {
            *v += *d * k * x;
            *d *= s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{forward, forward_jet, init_params, LayerSpec};

    fn net(act: Activation, d_in: usize, d_out: usize, seed: u64) -> MlpParams<f64> {
        init_params(
            d_in,
            &[LayerSpec::new(6, Activation::Sin), LayerSpec::new(5, act), LayerSpec::new(d_out, Activation::Identity)],
            &[],
            seed,
        )
        .unwrap()
    }

    #[test]
    fn batched_values_and_jets_match_pointwise() {
        for act in [Activation::Relu, Activation::Sigmoid, Activation::Tanh, Activation::Sin] {
            let p = net(act, 3, 2, 5);
            let xs = [0.1, 0.2, 0.3, -0.5, 0.7, 0.9, 1.0, 0.0, -0.2];
            let mut pass = BatchPass::new();
            forward_batch(&p, &xs, true, &mut pass);
            for s in 0..3 {
                let jets = forward_jet(&p, &xs[3 * s..3 * s + 3]).unwrap();
                for (j, jet) in jets.iter().enumerate() {
                    assert!((pass.output(0, s, j, 2) - jet.value).abs() < 1e-13);
                    for c in 0..3 {
                        assert!((pass.output(c + 1, s, j, 2) - jet.d1[c]).abs() < 1e-13);
                    }
                }
            }
            forward_batch(&p, &xs, false, &mut pass);
            assert_eq!(pass.channels(), 1);
            let v = forward(&p, &xs[3..6]).unwrap();
            assert!((pass.output(0, 1, 1, 2) - v[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn backward_matches_finite_differences_of_derivative_loss() {
        // L = sum_s (du/dx_1)^2 + u^2 over a batch of two points.
        for act in [Activation::Sigmoid, Activation::Tanh, Activation::Sin] {
            let p = net(act, 2, 1, 9);
            let xs = [0.3, 0.6, -0.4, 0.1];
            let loss = |q: &MlpParams<f64>| -> f64 {
                (0..2)
                    .map(|s| {
                        let j = &forward_jet(q, &xs[2 * s..2 * s + 2]).unwrap()[0];
                        j.d1[1] * j.d1[1] + j.value * j.value
                    })
                    .sum()
            };
            let mut pass = BatchPass::new();
            forward_batch(&p, &xs, true, &mut pass);
            let out = pass.outputs().to_vec();
            let mut seed = vec![0.0; out.len()];
            for s in 0..2 {
                seed[s] = 2.0 * out[s];
                seed[2 * 2 + s] = 2.0 * out[2 * 2 + s];
            }
            let mut g = vec![0.0; p.num_leaves()];
            backward_batch(&p, &mut pass, &seed, &mut g);
            let flat = p.to_flat();
            for i in (0..flat.len()).step_by(3) {
                let h = 1e-6;
                let mut q = p.clone();
                let mut f = flat.clone();
                f[i] += h;
                q.set_flat(&f);
                let up = loss(&q);
                f[i] -= 2.0 * h;
                q.set_flat(&f);
                let dn = loss(&q);
                let fd = (up - dn) / (2.0 * h);
                let err = (g[i] - fd).abs();
                assert!(err < 1e-6 * (1.0 + fd.abs()), "{act:?} leaf {i}: {} vs {}", g[i], fd);
            }
        }
    }
}
