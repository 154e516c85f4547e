use serde::{Deserialize, Serialize};

use super::params::{GradStore, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub first_moment: ParamStore,
    pub second_moment: ParamStore,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update in place.
pub fn adam_step(params: &mut ParamStore, grads: &GradStore, state: &mut OptimizerState) -> Result<()> {
    if !params.congruent(&grads.grads) || !params.congruent(&state.first_moment) || !params.congruent(&state.second_moment) {
        return Err(Error::dim("adam_step", "params", "grads/moments"));
    }
    for (i, g) in grads.grads.layers.iter().enumerate() {
        if !g.weights.is_finite() || !g.bias.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric { layer: i });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (lr, eps) = (state.lr, state.eps);

    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for k in 0..p.len() {
            let gk = g[k];
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    };
    for (li, layer) in params.layers.iter_mut().enumerate() {
        let g = &grads.grads.layers[li];
        let m = &mut state.first_moment.layers[li];
        let v = &mut state.second_moment.layers[li];
        update(layer.weights.data_mut(), g.weights.data(), m.weights.data_mut(), v.weights.data_mut());
        update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
    }
    Ok(())
}
