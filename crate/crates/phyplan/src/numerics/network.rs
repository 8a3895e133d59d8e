//! Feed-forward network with exact input and parameter derivatives.
//!
//! The physics loss needs d(output)/d(input) at every collocation point and
//! the optimizer needs d(loss)/d(weights) through that derivative, which is
//! a second-order quantity. Rather than a general tape, the network carries
//! a hand-derived forward-tangent pass (directional input derivative) and a
//! reverse pass over the coupled (value, tangent) computation. Both passes
//! work off cached activations only: for tanh, sigma' = 1 - a^2 and
//! sigma'' = -2a(1 - a^2) in terms of the activation value a.

use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Pointwise nonlinearity of a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// First derivative expressed in terms of the activation value `a`.
    fn d1(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    /// Second derivative expressed in terms of the activation value `a`.
    fn d2(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => -2.0 * a * (1.0 - a * a),
            Activation::Identity => 0.0,
        }
    }
}

/// Network outputs together with their derivatives with respect to the
/// inputs.
#[derive(Clone, Debug)]
pub struct GradientResult {
    /// Network outputs.
    pub value: Vec<f64>,
    /// `input_jacobian[i][j]` = d output_j / d input_i.
    pub input_jacobian: Vec<Vec<f64>>,
}

/// Fully connected feed-forward network.
///
/// `weights[k]` is row-major with shape `layer_sizes[k+1] x layer_sizes[k]`
/// and maps layer k to layer k+1; hidden layers share one activation, the
/// final layer has its own.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNetwork {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    hidden_activation: Activation,
    output_activation: Activation,
}

/// Per-layer activation values from a forward pass.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    /// `activations[k]` holds layer k's values; index 0 is the input.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// The output layer's values.
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache is filled")
    }
}

/// Directional-derivative values from a tangent pass, layer by layer.
#[derive(Clone, Debug, Default)]
pub struct TangentCache {
    /// `tangents[k]`: directional derivative of layer k's activations.
    tangents: Vec<Vec<f64>>,
    /// `pre_tangents[k]`: W_k * tangents[k], before the activation factor.
    pre_tangents: Vec<Vec<f64>>,
}

impl TangentCache {
    /// Directional derivative of the outputs.
    pub fn output_tangent(&self) -> &[f64] {
        self.tangents.last().expect("cache is filled")
    }
}

impl DenseNetwork {
    /// Builds a network with all weights and biases zero.
    pub fn zeros(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let weights = (0..layer_sizes.len() - 1)
            .map(|k| vec![0.0; layer_sizes[k] * layer_sizes[k + 1]])
            .collect();
        let biases = (0..layer_sizes.len() - 1)
            .map(|k| vec![0.0; layer_sizes[k + 1]])
            .collect();
        Ok(DenseNetwork {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden_activation,
            output_activation,
        })
    }

    /// Builds a network from explicit per-layer weights and biases.
    pub fn from_parts(
        layer_sizes: &[usize],
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let n = layer_sizes.len() - 1;
        if weights.len() != n || biases.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} weight and bias layers, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for k in 0..n {
            if weights[k].len() != layer_sizes[k] * layer_sizes[k + 1] {
                return Err(Error::Shape(format!(
                    "layer {k} weights: expected {}x{} entries, got {}",
                    layer_sizes[k + 1],
                    layer_sizes[k],
                    weights[k].len()
                )));
            }
            if biases[k].len() != layer_sizes[k + 1] {
                return Err(Error::Shape(format!(
                    "layer {k} biases: expected {}, got {}",
                    layer_sizes[k + 1],
                    biases[k].len()
                )));
            }
        }
        Ok(DenseNetwork {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden_activation,
            output_activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    fn num_weight_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    fn activation_of(&self, k: usize) -> Activation {
        if k == self.num_weight_layers() - 1 {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Total count of weights and biases, in flattening order.
    pub fn num_params(&self) -> usize {
        (0..self.num_weight_layers())
            .map(|k| self.layer_sizes[k] * self.layer_sizes[k + 1] + self.layer_sizes[k + 1])
            .sum()
    }

    /// Appends all parameters to `out`: layer-major, each layer's weights
    /// row-major followed by its biases. This order is the serialization
    /// contract.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for k in 0..self.num_weight_layers() {
            out.extend_from_slice(&self.weights[k]);
            out.extend_from_slice(&self.biases[k]);
        }
    }

    /// All parameters as one vector in flattening order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.flatten_into(&mut out);
        out
    }

    /// Overwrites all parameters from a flat vector in flattening order.
    ///
    /// Panics if `flat` has the wrong length.
    pub fn set_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let mut pos = 0;
        for k in 0..self.num_weight_layers() {
            let nw = self.weights[k].len();
            self.weights[k].copy_from_slice(&flat[pos..pos + nw]);
            pos += nw;
            let nb = self.biases[k].len();
            self.biases[k].copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
        }
    }

    /// Offset of each layer's weight block in the flat parameter vector.
    fn flat_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.num_weight_layers());
        let mut pos = 0;
        for k in 0..self.num_weight_layers() {
            offsets.push(pos);
            pos += self.weights[k].len() + self.biases[k].len();
        }
        offsets
    }

    fn layer_forward_into(&self, k: usize, a: &[f64], out: &mut Vec<f64>) {
        let n_in = self.layer_sizes[k];
        let n_out = self.layer_sizes[k + 1];
        let act = self.activation_of(k);
        let w = &self.weights[k];
        out.clear();
        out.reserve(n_out);
        for j in 0..n_out {
            let mut z = self.biases[k][j];
            for (wi, ai) in w[j * n_in..(j + 1) * n_in].iter().zip(a) {
                z += wi * ai;
            }
            out.push(act.apply(z));
        }
    }

    /// Evaluates the network.
    ///
    /// Panics on input dimension mismatch.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let mut a = x.to_vec();
        let mut b = Vec::new();
        for k in 0..self.num_weight_layers() {
            self.layer_forward_into(k, &a, &mut b);
            std::mem::swap(&mut a, &mut b);
        }
        a
    }

    /// Evaluates the network, recording every layer's activations.
    pub fn forward_cached(&self, x: &[f64], cache: &mut ForwardCache) {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let n_layers = self.layer_sizes.len();
        cache.activations.resize(n_layers, Vec::new());
        cache.activations[0].clear();
        cache.activations[0].extend_from_slice(x);
        for k in 0..n_layers - 1 {
            let (done, todo) = cache.activations.split_at_mut(k + 1);
            // Reborrow pattern: read layer k while writing layer k+1.
            self.layer_forward_into(k, &done[k], &mut todo[0]);
        }
    }

    /// Propagates a directional derivative of the inputs through the cached
    /// forward pass, recording every layer's tangent.
    ///
    /// Returns the tangent of the outputs: d(outputs)/d(alpha) where the
    /// inputs move along `x + alpha * dir`.
    pub fn forward_tangent<'a>(
        &self,
        cache: &ForwardCache,
        dir: &[f64],
        tcache: &'a mut TangentCache,
    ) -> &'a [f64] {
        assert_eq!(dir.len(), self.input_dim(), "direction dimension mismatch");
        let n_layers = self.layer_sizes.len();
        tcache.tangents.resize(n_layers, Vec::new());
        tcache.pre_tangents.resize(n_layers - 1, Vec::new());
        tcache.tangents[0].clear();
        tcache.tangents[0].extend_from_slice(dir);
        for k in 0..n_layers - 1 {
            let n_in = self.layer_sizes[k];
            let n_out = self.layer_sizes[k + 1];
            let act = self.activation_of(k);
            let w = &self.weights[k];
            let a_next = &cache.activations[k + 1];
            let (done, todo) = tcache.tangents.split_at_mut(k + 1);
            let u = &done[k];
            let u_next = &mut todo[0];
            let s = &mut tcache.pre_tangents[k];
            s.clear();
            s.reserve(n_out);
            u_next.clear();
            u_next.reserve(n_out);
            for j in 0..n_out {
                let mut sj = 0.0;
                for (wi, ui) in w[j * n_in..(j + 1) * n_in].iter().zip(u.iter()) {
                    sj += wi * ui;
                }
                s.push(sj);
                u_next.push(act.d1(a_next[j]) * sj);
            }
        }
        tcache.output_tangent()
    }

    /// Evaluates the network and the exact jacobian of outputs with respect
    /// to inputs, by one tangent pass per input dimension.
    pub fn forward_with_input_jacobian(&self, x: &[f64]) -> GradientResult {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache);
        let d = self.input_dim();
        let m = self.output_dim();
        let mut jac = vec![vec![0.0; m]; d];
        let mut tcache = TangentCache::default();
        let mut dir = vec![0.0; d];
        for i in 0..d {
            dir.iter_mut().for_each(|v| *v = 0.0);
            dir[i] = 1.0;
            let u_out = self.forward_tangent(&cache, &dir, &mut tcache);
            jac[i].copy_from_slice(u_out);
        }
        GradientResult {
            value: cache.output().to_vec(),
            input_jacobian: jac,
        }
    }

    /// Accumulates d(loss)/d(params) into `grad` (flattening order), given
    /// the cached forward pass and `out_bar` = d(loss)/d(outputs).
    pub fn backprop_data(&self, cache: &ForwardCache, out_bar: &[f64], grad: &mut [f64]) {
        assert_eq!(out_bar.len(), self.output_dim(), "output adjoint length");
        assert_eq!(grad.len(), self.num_params(), "gradient buffer length");
        let offsets = self.flat_offsets();
        let mut a_bar = out_bar.to_vec();
        let mut z_bar = Vec::new();
        let mut prev_bar = Vec::new();
        for k in (0..self.num_weight_layers()).rev() {
            let n_in = self.layer_sizes[k];
            let n_out = self.layer_sizes[k + 1];
            let act = self.activation_of(k);
            let a_next = &cache.activations[k + 1];
            let a = &cache.activations[k];
            let w = &self.weights[k];
            z_bar.clear();
            z_bar.extend((0..n_out).map(|j| act.d1(a_next[j]) * a_bar[j]));
            let (w_grad, b_grad) = grad[offsets[k]..offsets[k] + n_in * n_out + n_out]
                .split_at_mut(n_in * n_out);
            for j in 0..n_out {
                let zj = z_bar[j];
                for (g, ai) in w_grad[j * n_in..(j + 1) * n_in].iter_mut().zip(a) {
                    *g += zj * ai;
                }
                b_grad[j] += zj;
            }
            if k > 0 {
                prev_bar.clear();
                prev_bar.resize(n_in, 0.0);
                for j in 0..n_out {
                    let zj = z_bar[j];
                    for (p, wi) in prev_bar.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                        *p += wi * zj;
                    }
                }
                std::mem::swap(&mut a_bar, &mut prev_bar);
            }
        }
    }

    /// Accumulates d(loss)/d(params) into `grad` when the loss depends on
    /// both the outputs and their directional derivative.
    ///
    /// `out_bar` = d(loss)/d(outputs), `out_tan_bar` = d(loss)/d(output
    /// tangents); the reverse pass runs over the coupled value/tangent
    /// computation recorded in `cache` and `tcache`.
    pub fn backprop_tangent(
        &self,
        cache: &ForwardCache,
        tcache: &TangentCache,
        out_bar: &[f64],
        out_tan_bar: &[f64],
        grad: &mut [f64],
    ) {
        assert_eq!(out_bar.len(), self.output_dim(), "output adjoint length");
        assert_eq!(out_tan_bar.len(), self.output_dim(), "tangent adjoint length");
        assert_eq!(grad.len(), self.num_params(), "gradient buffer length");
        let offsets = self.flat_offsets();
        let mut a_bar = out_bar.to_vec();
        let mut u_bar = out_tan_bar.to_vec();
        let mut z_bar = Vec::new();
        let mut s_bar = Vec::new();
        let mut prev_a_bar = Vec::new();
        let mut prev_u_bar = Vec::new();
        for k in (0..self.num_weight_layers()).rev() {
            let n_in = self.layer_sizes[k];
            let n_out = self.layer_sizes[k + 1];
            let act = self.activation_of(k);
            let a_next = &cache.activations[k + 1];
            let a = &cache.activations[k];
            let u = &tcache.tangents[k];
            let s = &tcache.pre_tangents[k];
            let w = &self.weights[k];
            z_bar.clear();
            s_bar.clear();
            for j in 0..n_out {
                let d1 = act.d1(a_next[j]);
                let d2 = act.d2(a_next[j]);
                z_bar.push(d1 * a_bar[j] + d2 * s[j] * u_bar[j]);
                s_bar.push(d1 * u_bar[j]);
            }
            let (w_grad, b_grad) = grad[offsets[k]..offsets[k] + n_in * n_out + n_out]
                .split_at_mut(n_in * n_out);
            for j in 0..n_out {
                let (zj, sj) = (z_bar[j], s_bar[j]);
                let row = &mut w_grad[j * n_in..(j + 1) * n_in];
                for i in 0..n_in {
                    row[i] += zj * a[i] + sj * u[i];
                }
                b_grad[j] += zj;
            }
            if k > 0 {
                prev_a_bar.clear();
                prev_a_bar.resize(n_in, 0.0);
                prev_u_bar.clear();
                prev_u_bar.resize(n_in, 0.0);
                for j in 0..n_out {
                    let (zj, sj) = (z_bar[j], s_bar[j]);
                    let row = &w[j * n_in..(j + 1) * n_in];
                    for i in 0..n_in {
                        prev_a_bar[i] += row[i] * zj;
                        prev_u_bar[i] += row[i] * sj;
                    }
                }
                std::mem::swap(&mut a_bar, &mut prev_a_bar);
                std::mem::swap(&mut u_bar, &mut prev_u_bar);
            }
        }
    }
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Shape(format!(
            "need at least input and output layers, got {} sizes",
            layer_sizes.len()
        )));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(Error::Shape("zero-width layer".into()));
    }
    Ok(())
}

/// Draws weights from a normal distribution with variance
/// 2 / (fan_in + fan_out); biases start at zero. Hidden layers use tanh,
/// the output layer is linear. Deterministic for a fixed seed.
pub fn xavier_init(layer_sizes: &[usize], seed: u64) -> Result<DenseNetwork> {
    let mut net = DenseNetwork::zeros(layer_sizes, Activation::Tanh, Activation::Identity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..net.layer_sizes.len() - 1 {
        let fan_in = net.layer_sizes[k];
        let fan_out = net.layer_sizes[k + 1];
        let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("positive finite std");
        for w in net.weights[k].iter_mut() {
            *w = dist.sample(&mut rng);
        }
    }
    Ok(net)
}
