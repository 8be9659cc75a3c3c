use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::params::ParamVector;
use crate::error::{check_dim, Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Softplus,
    Relu,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Softplus => softplus(z),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative given the pre-activation `z` and the output `a = f(z)`.
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - a * a,
            Activation::Softplus => sigmoid(z),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
            Activation::Relu => "relu",
        }
    }
}

pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Shape and activation of one layer; the parameters live in the owning
/// network's [`ParamVector`] as a row-major `[in_dim × out_dim]` weight block
/// followed by an `[out_dim]` bias block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    weight_offset: usize,
    bias_offset: usize,
}

impl DenseLayer {
    pub fn weights<'a>(&self, params: &'a ParamVector) -> ArrayView2<'a, f64> {
        let slice = &params.values()[self.weight_offset..self.weight_offset + self.in_dim * self.out_dim];
        ArrayView2::from_shape((self.in_dim, self.out_dim), slice).expect("layer block shape")
    }

    pub fn bias<'a>(&self, params: &'a ParamVector) -> ArrayView1<'a, f64> {
        ArrayView1::from(&params.values()[self.bias_offset..self.bias_offset + self.out_dim])
    }

    fn param_range(&self) -> (usize, usize) {
        (self.weight_offset, self.bias_offset + self.out_dim)
    }
}

/// `activation(x · W + b)` for a batch `x` of shape `[batch × in_dim]`.
/// Returns the pre-activation alongside the output.
pub fn dense_forward(
    weights: ArrayView2<f64>,
    bias: ArrayView1<f64>,
    activation: Activation,
    x: ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_dim("dense_forward input", weights.nrows(), x.ncols())?;
    let mut pre = x.dot(&weights);
    pre += &bias;
    let out = if activation == Activation::Identity {
        pre.clone()
    } else {
        pre.mapv(|z| activation.apply(z))
    };
    Ok((pre, out))
}

/// Xavier/Glorot uniform initialisation with zero bias.
pub fn xavier_uniform(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Vec<f64> {
    let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
    (0..in_dim * out_dim)
        .map(|_| rng.random_range(-limit..=limit))
        .collect()
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    out: Array2<f64>,
}

/// A sequential stack of dense layers.
///
/// Gradient convention: `backward` receives per-sample output gradients
/// `dℓ_i/dy_i`, accumulates the batch *mean* of the parameter gradients and
/// returns per-sample input gradients `dℓ_i/dx_i`.
#[derive(Debug, Clone)]
pub struct Mlp {
    params: ParamVector,
    layers: Vec<DenseLayer>,
    cache: Option<Vec<LayerCache>>,
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`; hidden layers use `hidden`, the last
    /// layer uses `output`.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "an Mlp needs at least input and output sizes");
        let mut params = ParamVector::new();
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (i, pair) in sizes.windows(2).enumerate() {
            let (in_dim, out_dim) = (pair[0], pair[1]);
            let activation = if i + 2 == sizes.len() { output } else { hidden };
            let weight_offset = params.push_block(format!("layer{i}.weight"), xavier_uniform(in_dim, out_dim, rng));
            let bias_offset = params.push_block(format!("layer{i}.bias"), vec![0.0; out_dim]);
            layers.push(DenseLayer {
                in_dim,
                out_dim,
                activation,
                weight_offset,
                bias_offset,
            });
        }
        Self {
            params,
            layers,
            cache: None,
        }
    }

    /// Builds a network from explicit weights (`[in × out]`) and biases.
    pub fn from_layers(spec: Vec<(Array2<f64>, Array1<f64>, Activation)>) -> Result<Self> {
        if spec.is_empty() {
            return Err(Error::InvalidArgument("an Mlp needs at least one layer".into()));
        }
        let mut params = ParamVector::new();
        let mut layers = Vec::with_capacity(spec.len());
        let mut prev_out: Option<usize> = None;
        for (i, (w, b, activation)) in spec.into_iter().enumerate() {
            let (in_dim, out_dim) = w.dim();
            check_dim("from_layers bias", out_dim, b.len())?;
            if let Some(prev) = prev_out {
                check_dim("from_layers chaining", prev, in_dim)?;
            }
            prev_out = Some(out_dim);
            let w: Vec<f64> = w.iter().copied().collect();
            let weight_offset = params.push_block(format!("layer{i}.weight"), w);
            let bias_offset = params.push_block(format!("layer{i}.bias"), b.to_vec());
            layers.push(DenseLayer {
                in_dim,
                out_dim,
                activation,
                weight_offset,
                bias_offset,
            });
        }
        Ok(Self {
            params,
            layers,
            cache: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    /// Layer sizes `[in, h1, ..., out]`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("Mlp::forward input", self.in_dim(), x.ncols())?;
        let mut layers = self.layers.iter();
        let first = layers.next().expect("non-empty");
        let (_, mut h) = dense_forward(first.weights(&self.params), first.bias(&self.params), first.activation, x)?;
        for layer in layers {
            h = dense_forward(layer.weights(&self.params), layer.bias(&self.params), layer.activation, h.view())?.1;
        }
        Ok(h)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass that records activations for a following `backward`.
    pub fn forward_train(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("Mlp::forward_train input", self.in_dim(), x.ncols())?;
        let mut cache = Vec::with_capacity(self.layers.len());
        let mut input = x.to_owned();
        for layer in &self.layers {
            let (pre, out) = dense_forward(layer.weights(&self.params), layer.bias(&self.params), layer.activation, input.view())?;
            let next = out.clone();
            cache.push(LayerCache { input, pre, out });
            input = next;
        }
        self.cache = Some(cache);
        Ok(input)
    }

    /// Reverse-mode pass over the cached forward. Parameter gradients are
    /// added (batch mean) to the gradient buffer; the cache is consumed.
    pub fn backward(&mut self, grad_out: ArrayView2<f64>) -> Result<Array2<f64>> {
        let cache = self.cache.take().ok_or(Error::NoCachedActivations("Mlp"))?;
        let batch = cache[0].input.nrows();
        check_dim("Mlp::backward batch", batch, grad_out.nrows())?;
        check_dim("Mlp::backward width", self.out_dim(), grad_out.ncols())?;
        let inv_batch = 1.0 / batch as f64;
        let mut delta = grad_out.to_owned();
        for (layer, c) in self.layers.iter().zip(cache.iter()).rev() {
            if layer.activation != Activation::Identity {
                let act = layer.activation;
                ndarray::Zip::from(&mut delta)
                    .and(&c.pre)
                    .and(&c.out)
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            }
            let grad_w = c.input.t().dot(&delta);
            let grad_b = delta.sum_axis(Axis(0));
            let input_grad = delta.dot(&layer.weights(&self.params).t());
            let grads = self.params.grads_mut();
            let w_slice = &mut grads[layer.weight_offset..layer.weight_offset + layer.in_dim * layer.out_dim];
            for (g, gw) in w_slice.iter_mut().zip(grad_w.iter()) {
                *g += gw * inv_batch;
            }
            let b_slice = &mut grads[layer.bias_offset..layer.bias_offset + layer.out_dim];
            for (g, gb) in b_slice.iter_mut().zip(grad_b.iter()) {
                *g += gb * inv_batch;
            }
            delta = input_grad;
        }
        Ok(delta)
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Gradient slice belonging to layer `i` (weights then bias).
    pub fn layer_grads(&self, i: usize) -> &[f64] {
        let (start, end) = self.layers[i].param_range();
        &self.params.grads()[start..end]
    }
}
