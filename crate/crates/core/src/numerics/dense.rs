use serde::{Deserialize, Serialize};

use super::params::Layer;
use super::tensor::Tensor2;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    /// Row-wise softmax.
    Softmax,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of one row, written into `out`.
pub fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        sum += *o;
    }
    let inv = 1.0 / sum;
    out.iter_mut().for_each(|o| *o *= inv);
}

pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; row.len()];
    if !row.is_empty() {
        softmax_into(row, &mut out);
    }
    out
}

impl Activation {
    pub fn apply(self, pre: &mut Tensor2) {
        match self {
            Activation::Identity => {}
            Activation::Relu => pre.data_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => pre.data_mut().iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Sigmoid => pre.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => {
                if pre.cols() == 0 {
                    return;
                }
                let mut buf = vec![0.0; pre.cols()];
                for r in 0..pre.rows() {
                    softmax_into(pre.row(r), &mut buf);
                    pre.row_mut(r).copy_from_slice(&buf);
                }
            }
        }
    }

    /// Maps ∂L/∂out to ∂L/∂pre given the activation's output.
    pub fn backprop(self, out: &Tensor2, grad_out: &Tensor2) -> Tensor2 {
        let mut g = grad_out.clone();
        match self {
            Activation::Identity => {}
            Activation::Relu => {
                for (gv, &o) in g.data_mut().iter_mut().zip(out.data()) {
                    if o <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (gv, &o) in g.data_mut().iter_mut().zip(out.data()) {
                    *gv *= 1.0 - o * o;
                }
            }
            Activation::Sigmoid => {
                for (gv, &o) in g.data_mut().iter_mut().zip(out.data()) {
                    *gv *= o * (1.0 - o);
                }
            }
            Activation::Softmax => {
                for r in 0..out.rows() {
                    let s = out.row(r);
                    let dot: f64 = s.iter().zip(grad_out.row(r)).map(|(a, b)| a * b).sum();
                    for (gv, &sv) in g.row_mut(r).iter_mut().zip(s) {
                        *gv = sv * (*gv - dot);
                    }
                }
            }
        }
        g
    }
}

/// Values recorded by [`dense_forward`] for the matching backward pass.
#[derive(Clone, Debug)]
pub struct DenseCache {
    pub input: Tensor2,
    pub output: Tensor2,
    pub activation: Activation,
}

pub fn dense_forward(x: &Tensor2, layer: &Layer, activation: Activation) -> Result<(Tensor2, DenseCache)> {
    if x.cols() != layer.input_width() {
        return Err(Error::dim(
            "dense_forward",
            format!("input {}", x.shape_str()),
            format!("weights {}", layer.weights.shape_str()),
        ));
    }
    let mut pre = x.matmul(&layer.weights)?;
    let out_w = layer.output_width();
    for r in 0..pre.rows() {
        for (v, b) in pre.row_mut(r).iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    debug_assert_eq!(pre.cols(), out_w);
    activation.apply(&mut pre);
    let cache = DenseCache {
        input: x.clone(),
        output: pre.clone(),
        activation,
    };
    Ok((pre, cache))
}

/// Returns (∂L/∂x, ∂L/∂layer).
pub fn dense_backward(layer: &Layer, grad_out: &Tensor2, cache: &DenseCache) -> Result<(Tensor2, Layer)> {
    let mut grad = Layer::zeros(layer.input_width(), layer.output_width());
    let grad_in = dense_backward_into(layer, grad_out, cache, &mut grad)?;
    Ok((grad_in, grad))
}

/// As [`dense_backward`], adding the parameter gradient into `grad`.
pub fn dense_backward_into(layer: &Layer, grad_out: &Tensor2, cache: &DenseCache, grad: &mut Layer) -> Result<Tensor2> {
    if !grad.same_shape(layer) {
        return Err(Error::dim("dense_backward", grad.weights.shape_str(), layer.weights.shape_str()));
    }
    if cache.input.cols() != layer.input_width()
        || cache.output.cols() != layer.output_width()
        || cache.input.rows() != cache.output.rows()
    {
        return Err(Error::Cache(format!(
            "cache {} -> {} against layer {}",
            cache.input.shape_str(),
            cache.output.shape_str(),
            layer.weights.shape_str()
        )));
    }
    if grad_out.shape() != cache.output.shape() {
        return Err(Error::Cache(format!(
            "grad_out {} against cached output {}",
            grad_out.shape_str(),
            cache.output.shape_str()
        )));
    }
    let g_pre = cache.activation.backprop(&cache.output, grad_out);
    cache.input.t_matmul_acc(&g_pre, &mut grad.weights)?;
    for r in 0..g_pre.rows() {
        for (b, &g) in grad.bias.iter_mut().zip(g_pre.row(r)) {
            *b += g;
        }
    }
    g_pre.matmul_t(&layer.weights)
}
