//! Belief propagation over a pre-defined graph.
//!
//! An agent's comm-net maps the mean-pooled `[beliefs ‖ states ‖ action-probs]`
//! of its in-neighbors through one dense encoding layer and a GRU whose state is
//! the agent's own belief.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::F64_BYTES;
use crate::error::{Error, Result};
use crate::graph::{CommGraph, Provenance};
use crate::numerics::{
    dense_backward, dense_forward, gru_backward_layers, gru_forward_layers, gru_params, gru_zero_params, Activation,
    DenseCache, GradStore, GruCache, Layer, LayerKind, ParamStore, Tensor2,
};
use crate::profiler::{Category, Recorder};

const ENCODER: usize = 0;
const GRU: std::ops::Range<usize> = 1..7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub agent: usize,
    pub vector: Vec<f64>,
    pub version: u64,
}

impl Belief {
    pub fn zero(agent: usize, dim: usize) -> Self {
        Self {
            agent,
            vector: vec![0.0; dim],
            version: 0,
        }
    }
}

/// Layer 0 encodes `belief + state + probs → belief`; layers 1..7 are the GRU.
pub fn comm_net_params<R: Rng + ?Sized>(belief_dim: usize, state_width: usize, probs_width: usize, rng: &mut R) -> ParamStore {
    let enc = Layer::uniform(belief_dim + state_width + probs_width, belief_dim, rng);
    let gru = gru_params(belief_dim, belief_dim, rng);
    let mut layers = vec![enc];
    layers.extend(gru.layers);
    let mut kinds = vec![LayerKind::Dense];
    kinds.extend(gru.kinds);
    ParamStore::new(layers, kinds)
}

pub fn comm_net_zero_params(belief_dim: usize, state_width: usize, probs_width: usize) -> ParamStore {
    let mut layers = vec![Layer::zeros(belief_dim + state_width + probs_width, belief_dim)];
    layers.extend(gru_zero_params(belief_dim, belief_dim).layers);
    let mut kinds = vec![LayerKind::Dense];
    kinds.extend([LayerKind::GruGate; 6]);
    ParamStore::new(layers, kinds)
}

fn widths(params: &ParamStore) -> Result<(usize, usize)> {
    if params.layers.len() != 7 {
        return Err(Error::dim("comm_net", "7 layers", format!("{} layers", params.layers.len())));
    }
    Ok((params.layers[ENCODER].input_width(), params.layers[ENCODER].output_width()))
}

#[derive(Clone, Debug)]
pub struct CommNetCache {
    encoder: DenseCache,
    gru: GruCache,
}

/// `input` rows are pooled neighbor vectors, `h_prev` rows the matching prior beliefs.
pub fn comm_net_forward(params: &ParamStore, input: &Tensor2, h_prev: &Tensor2) -> Result<(Tensor2, CommNetCache)> {
    widths(params)?;
    let (e, encoder) = dense_forward(input, &params.layers[ENCODER], Activation::Tanh)?;
    let (h, gru) = gru_forward_layers(&e, h_prev, &params.layers[GRU])?;
    Ok((h, CommNetCache { encoder, gru }))
}

/// Parameter gradient of one round; inputs and prior beliefs are constants.
pub fn comm_net_backward(params: &ParamStore, grad_h: &Tensor2, cache: &CommNetCache) -> Result<GradStore> {
    widths(params)?;
    let (d_e, _, gru_grads) = gru_backward_layers(grad_h, &cache.gru, &params.layers[GRU])?;
    let (_, g_enc) = dense_backward(&params.layers[ENCODER], &d_e, &cache.encoder)?;
    let mut grads = GradStore::zeros_for(params);
    grads.accumulate_layer(ENCODER, &g_enc)?;
    grads.accumulate_slice(GRU.start, &gru_grads)?;
    Ok(grads)
}

fn pooled(parts: [&[&[f64]]; 3], widths: [usize; 3]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(widths.iter().sum());
    for (list, w) in parts.into_iter().zip(widths) {
        let mut mean = vec![0.0; w];
        if !list.is_empty() {
            let inv = 1.0 / list.len() as f64;
            for v in list {
                if v.len() != w {
                    return Err(Error::Protocol(format!("neighbor vector width {} where {w} expected", v.len())));
                }
                for (m, x) in mean.iter_mut().zip(*v) {
                    *m += x * inv;
                }
            }
        }
        out.extend(mean);
    }
    Ok(out)
}

/// New belief from the agent's own belief and its in-neighbors' values.
pub fn neurcomm_update_belief(
    agent: usize,
    own: &Belief,
    neighbor_beliefs: &[&Belief],
    neighbor_states: &[&[f64]],
    neighbor_action_probs: &[&[f64]],
    params: &ParamStore,
) -> Result<Belief> {
    let k = neighbor_beliefs.len();
    if neighbor_states.len() != k || neighbor_action_probs.len() != k {
        return Err(Error::Protocol(format!(
            "agent {agent}: {k} neighbor beliefs, {} states, {} action-prob rows",
            neighbor_states.len(),
            neighbor_action_probs.len()
        )));
    }
    if let Some(b) = neighbor_beliefs.iter().find(|b| b.agent == agent) {
        return Err(Error::Protocol(format!("agent {} listed as its own neighbor", b.agent)));
    }
    let (in_w, dim) = widths(params)?;
    if own.vector.len() != dim {
        return Err(Error::dim("neurcomm_update_belief", format!("belief width {}", own.vector.len()), format!("{dim}")));
    }
    let state_w = neighbor_states.first().map_or(0, |s| s.len());
    let probs_w = in_w - dim - state_w;
    let beliefs: Vec<&[f64]> = neighbor_beliefs.iter().map(|b| b.vector.as_slice()).collect();
    let x = if k == 0 {
        vec![0.0; in_w]
    } else {
        pooled([&beliefs, neighbor_states, neighbor_action_probs], [dim, state_w, probs_w])?
    };
    let (h, _) = comm_net_forward(params, &Tensor2::row_vector(&x), &Tensor2::row_vector(&own.vector))?;
    Ok(Belief {
        agent,
        vector: h.into_vec(),
        version: own.version + 1,
    })
}

/// Pooled comm-net input for every agent under `graph`.
pub fn belief_inputs(graph: &CommGraph, beliefs: &[Belief], states: &[Vec<f64>], probs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = graph.n();
    if beliefs.len() != n || states.len() != n || probs.len() != n {
        return Err(Error::Protocol(format!(
            "{} beliefs, {} states, {} action-prob rows for {n} agents",
            beliefs.len(),
            states.len(),
            probs.len()
        )));
    }
    let ws = [
        beliefs.first().map_or(0, |b| b.vector.len()),
        states.first().map_or(0, Vec::len),
        probs.first().map_or(0, Vec::len),
    ];
    (0..n)
        .map(|i| {
            let nb = graph.in_neighbors(i);
            let b: Vec<&[f64]> = nb.iter().map(|&j| beliefs[j].vector.as_slice()).collect();
            let s: Vec<&[f64]> = nb.iter().map(|&j| states[j].as_slice()).collect();
            let p: Vec<&[f64]> = nb.iter().map(|&j| probs[j].as_slice()).collect();
            pooled([&b, &s, &p], ws)
        })
        .collect()
}

/// Synchronous round in a caller-chosen evaluation order.
pub fn belief_round_in_order(
    graph: &CommGraph,
    beliefs: &[Belief],
    states: &[Vec<f64>],
    probs: &[Vec<f64>],
    params: &[ParamStore],
    order: &[usize],
    rec: &mut Recorder,
) -> Result<Vec<Belief>> {
    if graph.provenance() != Provenance::Predefined {
        return Err(Error::Protocol("belief rounds run on a pre-defined graph".into()));
    }
    let n = graph.n();
    if params.len() != n {
        return Err(Error::Protocol(format!("{} comm-nets for {n} agents", params.len())));
    }
    let mut seen = vec![false; n];
    if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::Protocol("evaluation order must be a permutation of the agents".into()));
    }
    let payload_w: usize = beliefs.first().map_or(0, |b| b.vector.len())
        + states.first().map_or(0, Vec::len)
        + probs.first().map_or(0, Vec::len);
    let out = rec.span(Category::Communication, || -> Result<Vec<Belief>> {
        let mut next: Vec<Option<Belief>> = vec![None; n];
        for &i in order {
            let nb = graph.in_neighbors(i);
            let b: Vec<&Belief> = nb.iter().map(|&j| &beliefs[j]).collect();
            let s: Vec<&[f64]> = nb.iter().map(|&j| states[j].as_slice()).collect();
            let p: Vec<&[f64]> = nb.iter().map(|&j| probs[j].as_slice()).collect();
            next[i] = Some(neurcomm_update_belief(i, &beliefs[i], &b, &s, &p, &params[i])?);
        }
        Ok(next.into_iter().map(|b| b.expect("every agent evaluated")).collect())
    })?;
    rec.add_comm_bytes(graph.edge_count() as u64 * payload_w as u64 * F64_BYTES);
    Ok(out)
}

/// Every agent's belief is recomputed from the previous round's values.
pub fn belief_round(
    graph: &CommGraph,
    beliefs: &[Belief],
    states: &[Vec<f64>],
    probs: &[Vec<f64>],
    params: &[ParamStore],
    rec: &mut Recorder,
) -> Result<Vec<Belief>> {
    let order: Vec<usize> = (0..graph.n()).collect();
    belief_round_in_order(graph, beliefs, states, probs, params, &order, rec)
}
