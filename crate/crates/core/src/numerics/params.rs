use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Dense,
    GruGate,
    GraphScore,
}

/// Affine map `x·W + b` with `W` stored as `in × out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Tensor2,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Tensor2::zeros(input, output),
            bias: vec![0.0; output],
        }
    }

    /// Uniform(−√(1/fan_in), √(1/fan_in)) weights and biases.
    pub fn uniform<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = if input == 0 { 0.0 } else { (1.0 / input as f64).sqrt() };
        let mut draw = || if bound == 0.0 { 0.0 } else { rng.gen_range(-bound..bound) };
        let weights: Vec<f64> = (0..input * output).map(|_| draw()).collect();
        let bias = (0..output).map(|_| draw()).collect();
        Self {
            weights: Tensor2::from_vec(input, output, weights).expect("sized"),
            bias,
        }
    }

    pub fn input_width(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_width(&self) -> usize {
        self.weights.cols()
    }

    pub fn len(&self) -> usize {
        self.weights.data().len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn scalar_mut(&mut self, idx: usize) -> &mut f64 {
        let nw = self.weights.data().len();
        if idx < nw {
            &mut self.weights.data_mut()[idx]
        } else {
            &mut self.bias[idx - nw]
        }
    }

    fn scalar(&self, idx: usize) -> f64 {
        let nw = self.weights.data().len();
        if idx < nw {
            self.weights.data()[idx]
        } else {
            self.bias[idx - nw]
        }
    }

    pub(crate) fn same_shape(&self, other: &Layer) -> bool {
        self.weights.shape() == other.weights.shape() && self.bias.len() == other.bias.len()
    }
}

/// Ordered parameter layers of one network, tagged with their role.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub layers: Vec<Layer>,
    pub kinds: Vec<LayerKind>,
}

impl ParamStore {
    pub fn new(layers: Vec<Layer>, kinds: Vec<LayerKind>) -> Self {
        assert_eq!(layers.len(), kinds.len(), "one kind tag per layer");
        Self { layers, kinds }
    }

    pub fn single(layer: Layer, kind: LayerKind) -> Self {
        Self::new(vec![layer], vec![kind])
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Tensor2::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            kinds: self.kinds.clone(),
        }
    }

    pub fn congruent(&self, other: &ParamStore) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.same_shape(b))
    }

    /// Flat view used by finite differencing: weights then bias, layer by layer.
    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.len() {
                return l.scalar(idx);
            }
            idx -= l.len();
        }
        panic!("flat index out of range");
    }

    pub fn get_flat_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            if idx < l.len() {
                return l.scalar_mut(idx);
            }
            idx -= l.len();
        }
        panic!("flat index out of range");
    }

    pub fn iter_scalars(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data().iter().chain(l.bias.iter()).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.iter_scalars().all(f64::is_finite)
    }

    /// θ' ← τ·source + (1−τ)·θ'.
    pub fn soft_update_from(&mut self, source: &ParamStore, tau: f64) -> Result<()> {
        if !self.congruent(source) {
            return Err(Error::dim("soft_update", "target", "source"));
        }
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            for (a, &b) in t.weights.data_mut().iter_mut().zip(s.weights.data()) {
                *a = tau * b + (1.0 - tau) * *a;
            }
            for (a, &b) in t.bias.iter_mut().zip(&s.bias) {
                *a = tau * b + (1.0 - tau) * *a;
            }
        }
        Ok(())
    }
}

/// Gradients with the same layout as a [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradStore {
    pub grads: ParamStore,
    pub accumulated: bool,
}

impl GradStore {
    pub fn zeros_for(params: &ParamStore) -> Self {
        Self {
            grads: params.zeros_like(),
            accumulated: false,
        }
    }

    pub fn zero(&mut self) {
        for l in &mut self.grads.layers {
            l.weights.data_mut().iter_mut().for_each(|v| *v = 0.0);
            l.bias.iter_mut().for_each(|v| *v = 0.0);
        }
        self.accumulated = false;
    }

    pub fn layer_mut(&mut self, idx: usize) -> &mut Layer {
        &mut self.grads.layers[idx]
    }

    /// Adds a single-layer gradient into layer `idx`.
    pub fn accumulate_layer(&mut self, idx: usize, g: &Layer) -> Result<()> {
        let dst = &mut self.grads.layers[idx];
        if !dst.same_shape(g) {
            return Err(Error::dim(
                "accumulate_layer",
                dst.weights.shape_str(),
                g.weights.shape_str(),
            ));
        }
        dst.weights.add_assign(&g.weights)?;
        for (a, b) in dst.bias.iter_mut().zip(&g.bias) {
            *a += b;
        }
        self.accumulated = true;
        Ok(())
    }

    /// Adds consecutive layer gradients starting at layer `offset`.
    pub fn accumulate_slice(&mut self, offset: usize, gs: &[Layer]) -> Result<()> {
        if offset + gs.len() > self.grads.layers.len() {
            return Err(Error::dim(
                "accumulate_slice",
                format!("{} layers", self.grads.layers.len()),
                format!("{} at offset {offset}", gs.len()),
            ));
        }
        for (k, g) in gs.iter().enumerate() {
            self.accumulate_layer(offset + k, g)?;
        }
        Ok(())
    }

    pub fn accumulate(&mut self, other: &GradStore) -> Result<()> {
        if !self.grads.congruent(&other.grads) {
            return Err(Error::dim("accumulate", "grad store", "grad store"));
        }
        for (i, g) in other.grads.layers.iter().enumerate() {
            self.accumulate_layer(i, g)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.grads.layers {
            l.weights.scale(k);
            l.bias.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn get_flat(&self, idx: usize) -> f64 {
        self.grads.get_flat(idx)
    }
}
