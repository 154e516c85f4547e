//! Single GRU cell with an explicit backward pass.
//!
//! Layer order inside the [`ParamStore`]: `[W_z, U_z, W_r, U_r, W_n, U_n]`, where
//! `W_*` map the input (`in × hidden`) and `U_*` map the previous state
//! (`hidden × hidden`). The candidate uses the reset gate on the recurrent term:
//!
//! ```text
//! z  = σ(x·W_z + b_z + h·U_z + c_z)
//! r  = σ(x·W_r + b_r + h·U_r + c_r)
//! n  = tanh(x·W_n + b_n + r ⊙ (h·U_n + c_n))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```

use rand::Rng;

use super::dense::sigmoid;
use super::params::{GradStore, Layer, LayerKind, ParamStore};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

const WZ: usize = 0;
const UZ: usize = 1;
const WR: usize = 2;
const UR: usize = 3;
const WN: usize = 4;
const UN: usize = 5;

/// Random weights, zero gate biases.
pub fn gru_params<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> ParamStore {
    let mut layers = Vec::with_capacity(6);
    for _ in 0..3 {
        let mut w = Layer::uniform(input, hidden, rng);
        w.bias.iter_mut().for_each(|b| *b = 0.0);
        let mut u = Layer::uniform(hidden, hidden, rng);
        u.bias.iter_mut().for_each(|b| *b = 0.0);
        layers.push(w);
        layers.push(u);
    }
    ParamStore::new(layers, vec![LayerKind::GruGate; 6])
}

pub fn gru_zero_params(input: usize, hidden: usize) -> ParamStore {
    let layers = (0..3)
        .flat_map(|_| [Layer::zeros(input, hidden), Layer::zeros(hidden, hidden)])
        .collect();
    ParamStore::new(layers, vec![LayerKind::GruGate; 6])
}

pub fn gru_widths(params: &ParamStore) -> (usize, usize) {
    (params.layers[WZ].input_width(), params.layers[WZ].output_width())
}

#[derive(Clone, Debug)]
pub struct GruCache {
    x: Tensor2,
    h_prev: Tensor2,
    z: Tensor2,
    r: Tensor2,
    n: Tensor2,
    /// `h·U_n + c_n`, needed for the reset-gate gradient.
    hn: Tensor2,
}

fn affine(x: &Tensor2, layer: &Layer) -> Result<Tensor2> {
    let mut out = x.matmul(&layer.weights)?;
    for r in 0..out.rows() {
        for (v, b) in out.row_mut(r).iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    Ok(out)
}

fn check(x: &Tensor2, h_prev: &Tensor2, l: &[Layer]) -> Result<()> {
    if l.len() != 6 {
        return Err(Error::dim("gru_cell", "6 gate layers", format!("{} layers", l.len())));
    }
    let (input, hidden) = (l[WZ].input_width(), l[WZ].output_width());
    if x.rows() != h_prev.rows() {
        return Err(Error::dim("gru_cell rows", x.shape_str(), h_prev.shape_str()));
    }
    if x.cols() != input {
        return Err(Error::dim("gru_cell input", x.shape_str(), format!("input width {input}")));
    }
    if h_prev.cols() != hidden {
        return Err(Error::dim("gru_cell hidden", h_prev.shape_str(), format!("hidden width {hidden}")));
    }
    Ok(())
}

pub fn gru_cell_forward(x: &Tensor2, h_prev: &Tensor2, params: &ParamStore) -> Result<(Tensor2, GruCache)> {
    gru_forward_layers(x, h_prev, &params.layers)
}

/// Forward pass over the six gate layers `l`, which may be a slice of a larger store.
pub fn gru_forward_layers(x: &Tensor2, h_prev: &Tensor2, l: &[Layer]) -> Result<(Tensor2, GruCache)> {
    check(x, h_prev, l)?;
    let mut z = affine(x, &l[WZ])?;
    z.add_assign(&affine(h_prev, &l[UZ])?)?;
    z.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));

    let mut r = affine(x, &l[WR])?;
    r.add_assign(&affine(h_prev, &l[UR])?)?;
    r.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));

    let hn = affine(h_prev, &l[UN])?;
    let mut n = affine(x, &l[WN])?;
    for ((nv, &rv), &hv) in n.data_mut().iter_mut().zip(r.data()).zip(hn.data()) {
        *nv = (*nv + rv * hv).tanh();
    }

    let mut h = n.clone();
    for ((hv, &zv), &hp) in h.data_mut().iter_mut().zip(z.data()).zip(h_prev.data()) {
        *hv = (1.0 - zv) * *hv + zv * hp;
    }
    let cache = GruCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        z,
        r,
        n,
        hn,
    };
    Ok((h, cache))
}

/// Returns (∂L/∂x, ∂L/∂h_prev, ∂L/∂params).
pub fn gru_cell_backward(
    grad_h: &Tensor2,
    cache: &GruCache,
    params: &ParamStore,
) -> Result<(Tensor2, Tensor2, GradStore)> {
    let (dx, dh, layer_grads) = gru_backward_layers(grad_h, cache, &params.layers)?;
    let mut grads = GradStore::zeros_for(params);
    grads.accumulate_slice(0, &layer_grads)?;
    Ok((dx, dh, grads))
}

/// Backward pass over six gate layers; gradients come back in gate order.
pub fn gru_backward_layers(grad_h: &Tensor2, cache: &GruCache, l: &[Layer]) -> Result<(Tensor2, Tensor2, Vec<Layer>)> {
    let mut grads: Vec<Layer> = l.iter().map(|g| Layer::zeros(g.input_width(), g.output_width())).collect();
    let (dx, dh) = gru_backward_into(grad_h, cache, l, &mut grads)?;
    Ok((dx, dh, grads))
}

/// As [`gru_backward_layers`], adding gate gradients into `grads`.
pub fn gru_backward_into(grad_h: &Tensor2, cache: &GruCache, l: &[Layer], grads: &mut [Layer]) -> Result<(Tensor2, Tensor2)> {
    if grads.len() != 6 || grads.iter().zip(l).any(|(g, p)| !g.same_shape(p)) {
        return Err(Error::dim("gru_backward", format!("{} gradient layers", grads.len()), "6 gate layers"));
    }
    if grad_h.shape() != cache.z.shape() {
        return Err(Error::Cache(format!(
            "grad_h {} against cached state {}",
            grad_h.shape_str(),
            cache.z.shape_str()
        )));
    }
    check(&cache.x, &cache.h_prev, l)?;
    let len = grad_h.data().len();
    let (gd, zd, rd, nd, hnd, hpd) = (
        grad_h.data(),
        cache.z.data(),
        cache.r.data(),
        cache.n.data(),
        cache.hn.data(),
        cache.h_prev.data(),
    );
    let (rows, hidden) = grad_h.shape();
    let mut daz = Tensor2::zeros(rows, hidden);
    let mut dar = Tensor2::zeros(rows, hidden);
    let mut dan = Tensor2::zeros(rows, hidden);
    let mut dhn = Tensor2::zeros(rows, hidden);
    let mut dh_prev = Tensor2::zeros(rows, hidden);
    for k in 0..len {
        let g = gd[k];
        let (zv, rv, nv) = (zd[k], rd[k], nd[k]);
        let dz = g * (hpd[k] - nv);
        let dn = g * (1.0 - zv);
        let an = dn * (1.0 - nv * nv);
        daz.data_mut()[k] = dz * zv * (1.0 - zv);
        dar.data_mut()[k] = an * hnd[k] * rv * (1.0 - rv);
        dan.data_mut()[k] = an;
        dhn.data_mut()[k] = an * rv;
        dh_prev.data_mut()[k] = g * zv;
    }

    let pairs = [(WZ, &daz, &cache.x), (UZ, &daz, &cache.h_prev), (WR, &dar, &cache.x), (UR, &dar, &cache.h_prev), (WN, &dan, &cache.x), (UN, &dhn, &cache.h_prev)];
    for (idx, g_pre, input) in pairs {
        let g = &mut grads[idx];
        input.t_matmul_acc(g_pre, &mut g.weights)?;
        for r in 0..g_pre.rows() {
            for (b, &v) in g.bias.iter_mut().zip(g_pre.row(r)) {
                *b += v;
            }
        }
    }

    let mut dx = daz.matmul_t(&l[WZ].weights)?;
    dx.add_assign(&dar.matmul_t(&l[WR].weights)?)?;
    dx.add_assign(&dan.matmul_t(&l[WN].weights)?)?;

    dh_prev.add_assign(&daz.matmul_t(&l[UZ].weights)?)?;
    dh_prev.add_assign(&dar.matmul_t(&l[UR].weights)?)?;
    dh_prev.add_assign(&dhn.matmul_t(&l[UN].weights)?)?;
    Ok((dx, dh_prev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_and_state_stay_zero() {
        let p = gru_zero_params(3, 4);
        let x = Tensor2::from_vec(2, 3, vec![0.5, -1.0, 2.0, 0.1, 0.2, 0.3]).unwrap();
        let (h, _) = gru_cell_forward(&x, &Tensor2::zeros(2, 4), &p).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bounded_state_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = gru_params(3, 5, &mut rng);
        let x = Tensor2::from_vec(1, 3, vec![10.0, -7.0, 3.0]).unwrap();
        let h0 = Tensor2::from_vec(1, 5, vec![0.99, -0.99, 0.0, 0.5, -0.3]).unwrap();
        let (h, _) = gru_cell_forward(&x, &h0, &p).unwrap();
        assert!(h.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn row_mismatch_is_rejected() {
        let p = gru_zero_params(2, 2);
        let err = gru_cell_forward(&Tensor2::zeros(2, 2), &Tensor2::zeros(3, 2), &p).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }
}
