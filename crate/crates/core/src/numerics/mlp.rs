use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{dense_backward_into, dense_forward, Activation, DenseCache};
use super::params::{GradStore, Layer, LayerKind, ParamStore};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Stack of dense layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub params: ParamStore,
    pub activations: Vec<Activation>,
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    layers: Vec<DenseCache>,
}

impl Mlp {
    /// `widths = [in, h1, .., out]`; `hidden` on every layer but the last.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let n = widths.len() - 1;
        let layers: Vec<Layer> = widths.windows(2).map(|w| Layer::uniform(w[0], w[1], rng)).collect();
        let mut activations = vec![hidden; n];
        activations[n - 1] = output;
        Self {
            params: ParamStore::new(layers, vec![LayerKind::Dense; n]),
            activations,
        }
    }

    pub fn with_params(&self, params: ParamStore) -> Self {
        Self {
            params,
            activations: self.activations.clone(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.params.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.params.layers.last().map_or(0, Layer::output_width)
    }

    pub fn forward(&self, x: &Tensor2) -> Result<(Tensor2, MlpCache)> {
        forward_with(&self.params, &self.activations, x)
    }

    /// Forward pass without keeping caches.
    pub fn infer(&self, x: &Tensor2) -> Result<Tensor2> {
        Ok(self.forward(x)?.0)
    }

    pub fn backward(&self, grad_out: &Tensor2, cache: &MlpCache) -> Result<(Tensor2, GradStore)> {
        backward_with(&self.params, grad_out, cache)
    }

    /// Adds the parameter gradient into `grads` and returns ∂L/∂x.
    pub fn backward_into(&self, grad_out: &Tensor2, cache: &MlpCache, grads: &mut GradStore) -> Result<Tensor2> {
        let g = mlp_backward_into(&self.params.layers, grad_out, cache, &mut grads.grads.layers)?;
        grads.accumulated = true;
        Ok(g)
    }
}

pub fn forward_with(params: &ParamStore, activations: &[Activation], x: &Tensor2) -> Result<(Tensor2, MlpCache)> {
    mlp_forward(&params.layers, activations, x)
}

/// Forward over a run of dense layers, which may be a slice of a larger store.
pub fn mlp_forward(layers: &[Layer], activations: &[Activation], x: &Tensor2) -> Result<(Tensor2, MlpCache)> {
    let mut caches = Vec::with_capacity(layers.len());
    let mut h = x.clone();
    for (layer, &act) in layers.iter().zip(activations) {
        let (out, c) = dense_forward(&h, layer, act)?;
        caches.push(c);
        h = out;
    }
    Ok((h, MlpCache { layers: caches }))
}

pub fn backward_with(params: &ParamStore, grad_out: &Tensor2, cache: &MlpCache) -> Result<(Tensor2, GradStore)> {
    let mut grads = GradStore::zeros_for(params);
    let g = mlp_backward_into(&params.layers, grad_out, cache, &mut grads.grads.layers)?;
    grads.accumulated = true;
    Ok((g, grads))
}

/// Returns (∂L/∂x, per-layer gradients in layer order).
pub fn mlp_backward(layers: &[Layer], grad_out: &Tensor2, cache: &MlpCache) -> Result<(Tensor2, Vec<Layer>)> {
    if layers.len() != cache.layers.len() {
        return Err(Error::Cache(format!("{} layers against {} cached", layers.len(), cache.layers.len())));
    }
    let mut out: Vec<Layer> = layers.iter().map(|l| Layer::zeros(l.input_width(), l.output_width())).collect();
    let g = mlp_backward_into(layers, grad_out, cache, &mut out)?;
    Ok((g, out))
}

/// As [`mlp_backward`], adding layer gradients into `grads`.
pub fn mlp_backward_into(layers: &[Layer], grad_out: &Tensor2, cache: &MlpCache, grads: &mut [Layer]) -> Result<Tensor2> {
    if layers.len() != cache.layers.len() || layers.len() != grads.len() {
        return Err(Error::Cache(format!("{} layers against {} cached", layers.len(), cache.layers.len())));
    }
    let mut g = grad_out.clone();
    for ((layer, c), gl) in layers.iter().zip(&cache.layers).zip(grads.iter_mut()).rev() {
        g = dense_backward_into(layer, &g, c, gl)?;
    }
    Ok(g)
}
