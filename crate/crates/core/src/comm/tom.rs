//! Intention inference over other agents and the learnt message sender.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{CommGraph, Provenance};
use crate::numerics::{
    dense_backward_into, dense_forward, graph_aggregate, graph_aggregate_backward, gru_backward_into, gru_forward_layers,
    gru_params, mlp_backward_into, mlp_forward, Activation, AggregateCache, DenseCache, GradStore, GruCache, Layer,
    LayerKind, MlpCache, ParamStore, Tensor2,
};

const GRU: std::ops::Range<usize> = 0..6;
const HEAD: std::ops::Range<usize> = 6..8;
const HEAD_ACTS: [Activation; 2] = [Activation::Tanh, Activation::Identity];

/// Index of the `k`-th other agent as seen from agent `i`.
pub fn pair_partner(i: usize, k: usize) -> usize {
    if k < i {
        k
    } else {
        k + 1
    }
}

/// Layers 0..6 are a GRU run per ordered pair `(i, j)` on `[enc_i ‖ enc_j]`
/// (`2·enc → hid`), so every agent keeps one hidden state per other agent;
/// layers 6..8 are the head `hid → hid (tanh) → 1`.
pub fn tom_params<R: Rng + ?Sized>(enc: usize, hid: usize, rng: &mut R) -> ParamStore {
    let gru = gru_params(2 * enc, hid, rng);
    let mut layers = gru.layers;
    let mut kinds = gru.kinds;
    layers.push(Layer::uniform(hid, hid, rng));
    layers.push(Layer::uniform(hid, 1, rng));
    kinds.extend([LayerKind::Dense, LayerKind::Dense]);
    ParamStore::new(layers, kinds)
}

#[derive(Clone, Debug)]
pub struct TomCache {
    n: usize,
    enc: usize,
    gru: GruCache,
    head: MlpCache,
}

fn check_tom(params: &ParamStore) -> Result<(usize, usize)> {
    if params.layers.len() != 8 {
        return Err(Error::dim("tom_infer", "8 layers", format!("{} layers", params.layers.len())));
    }
    let l = &params.layers;
    Ok((l[0].input_width() / 2, l[0].output_width()))
}

/// Rows of the pair-major hidden state: `n·(n−1)`, pair `(i, k)` at row `i·(n−1) + k`.
pub fn tom_hidden_rows(n: usize) -> usize {
    n * n.saturating_sub(1)
}

/// Returns (intentions `n × (n−1)`, next pair hidden states, cache).
pub fn tom_forward(encoded: &Tensor2, hidden: &Tensor2, params: &ParamStore) -> Result<(Tensor2, Tensor2, TomCache)> {
    let (enc, _) = check_tom(params)?;
    let n = encoded.rows();
    let others = n.saturating_sub(1);
    if encoded.cols() != enc {
        return Err(Error::dim("tom_infer", encoded.shape_str(), format!("encoding width {enc}")));
    }
    let mut pairs = Tensor2::zeros(n * others, 2 * enc);
    for i in 0..n {
        for k in 0..others {
            let row = pairs.row_mut(i * others + k);
            row[..enc].copy_from_slice(encoded.row(i));
            row[enc..].copy_from_slice(encoded.row(pair_partner(i, k)));
        }
    }
    let (h, gru) = gru_forward_layers(&pairs, hidden, &params.layers[GRU])?;
    let (logits, head) = mlp_forward(&params.layers[HEAD], &HEAD_ACTS, &h)?;
    let intentions = Tensor2::from_vec(n, others, logits.into_vec())?;
    Ok((intentions, h, TomCache { n, enc, gru, head }))
}

/// One inference step: pair GRU update then per-other-agent intention logits.
pub fn tom_infer(encoded: &Tensor2, hidden: &Tensor2, params: &ParamStore) -> Result<(Tensor2, Tensor2)> {
    let (i, h, _) = tom_forward(encoded, hidden, params)?;
    Ok((i, h))
}

/// Gradient through one step; the incoming hidden states are treated as constants.
pub fn tom_backward(params: &ParamStore, grad_intentions: &Tensor2, cache: &TomCache) -> Result<(Tensor2, GradStore)> {
    let mut grads = GradStore::zeros_for(params);
    let d_enc = tom_backward_into(params, grad_intentions, cache, &mut grads)?;
    Ok((d_enc, grads))
}

/// As [`tom_backward`], adding the parameter gradient into `grads`.
pub fn tom_backward_into(params: &ParamStore, grad_intentions: &Tensor2, cache: &TomCache, grads: &mut GradStore) -> Result<Tensor2> {
    check_tom(params)?;
    if !grads.grads.congruent(params) {
        return Err(Error::dim("tom_backward", "grad store", "tom parameters"));
    }
    let (n, enc) = (cache.n, cache.enc);
    let others = n.saturating_sub(1);
    if grad_intentions.shape() != (n, others) {
        return Err(Error::Cache(format!("intention gradient {} for {n} agents", grad_intentions.shape_str())));
    }
    let d_logits = Tensor2::from_vec(n * others, 1, grad_intentions.data().to_vec())?;
    let d_h = mlp_backward_into(&params.layers[HEAD], &d_logits, &cache.head, &mut grads.grads.layers[HEAD])?;
    let (d_pairs, _) = gru_backward_into(&d_h, &cache.gru, &params.layers[GRU], &mut grads.grads.layers[GRU])?;
    grads.accumulated = true;
    let mut d_enc = Tensor2::zeros(n, enc);
    for i in 0..n {
        for k in 0..others {
            let row = d_pairs.row(i * others + k);
            for (a, b) in d_enc.row_mut(i).iter_mut().zip(&row[..enc]) {
                *a += b;
            }
            for (a, b) in d_enc.row_mut(pair_partner(i, k)).iter_mut().zip(&row[enc..]) {
                *a += b;
            }
        }
    }
    Ok(d_enc)
}

/// Layer 0 aggregates `[intentions ‖ features]` over the complete graph into
/// `hid`-wide node embeddings; layer 1 scores `[g_i ‖ g_j]` for edge `i → j`.
pub fn sender_params<R: Rng + ?Sized>(n: usize, feature_width: usize, hid: usize, rng: &mut R) -> ParamStore {
    ParamStore::new(
        vec![
            Layer::uniform(n.saturating_sub(1) + feature_width, hid, rng),
            Layer::uniform(2 * hid, 1, rng),
        ],
        vec![LayerKind::Dense, LayerKind::GraphScore],
    )
}

#[derive(Clone, Debug)]
pub struct SenderCache {
    n: usize,
    others: usize,
    hid: usize,
    aggregate: AggregateCache,
    score: DenseCache,
}

/// Sigmoid score for every directed edge; the diagonal is zero.
pub fn sender_scores(intentions: &Tensor2, features: &Tensor2, params: &ParamStore) -> Result<(Tensor2, SenderCache)> {
    if params.layers.len() != 2 {
        return Err(Error::dim("message_sender", "2 layers", format!("{} layers", params.layers.len())));
    }
    let n = features.rows();
    let others = n.saturating_sub(1);
    if intentions.shape() != (n, others) {
        return Err(Error::dim(
            "message_sender",
            format!("intentions {}", intentions.shape_str()),
            format!("features {}", features.shape_str()),
        ));
    }
    let node = Tensor2::hcat(&[intentions, features])?;
    let complete = CommGraph::complete(n, Provenance::Learnt);
    let (g, aggregate) = graph_aggregate(&node, &complete, &params.layers[0], Activation::Tanh)?;
    let hid = g.cols();
    let mut edges = Tensor2::zeros(n * others, 2 * hid);
    for i in 0..n {
        for k in 0..others {
            let row = edges.row_mut(i * others + k);
            row[..hid].copy_from_slice(g.row(i));
            row[hid..].copy_from_slice(g.row(pair_partner(i, k)));
        }
    }
    let (s, score) = dense_forward(&edges, &params.layers[1], Activation::Sigmoid)?;
    let mut scores = Tensor2::zeros(n, n);
    for i in 0..n {
        for k in 0..others {
            scores.set(i, pair_partner(i, k), s.get(i * others + k, 0));
        }
    }
    Ok((
        scores,
        SenderCache {
            n,
            others,
            hid,
            aggregate,
            score,
        },
    ))
}

/// Keeps edges whose score is strictly above `threshold`.
pub fn threshold_graph(scores: &Tensor2, threshold: f64) -> Result<CommGraph> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("comm_threshold must lie in [0, 1], got {threshold}")));
    }
    let n = scores.rows();
    let mut g = CommGraph::empty(n, Provenance::Learnt);
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            if scores.get(i, j) > threshold {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

/// Learnt communication graph for this step.
pub fn message_sender(intentions: &Tensor2, features: &Tensor2, params: &ParamStore, threshold: f64) -> Result<CommGraph> {
    let (scores, _) = sender_scores(intentions, features, params)?;
    threshold_graph(&scores, threshold)
}

/// Returns (∂L/∂intentions, ∂L/∂features, ∂L/∂params) given ∂L/∂scores.
pub fn sender_backward(params: &ParamStore, grad_scores: &Tensor2, cache: &SenderCache) -> Result<(Tensor2, Tensor2, GradStore)> {
    let mut grads = GradStore::zeros_for(params);
    let (d_int, d_feat) = sender_backward_into(params, grad_scores, cache, &mut grads)?;
    Ok((d_int, d_feat, grads))
}

/// As [`sender_backward`], adding the parameter gradient into `grads`.
pub fn sender_backward_into(params: &ParamStore, grad_scores: &Tensor2, cache: &SenderCache, grads: &mut GradStore) -> Result<(Tensor2, Tensor2)> {
    let (n, others, hid) = (cache.n, cache.others, cache.hid);
    if !grads.grads.congruent(params) {
        return Err(Error::dim("sender_backward", "grad store", "sender parameters"));
    }
    if grad_scores.shape() != (n, n) {
        return Err(Error::Cache(format!("score gradient {} for {n} agents", grad_scores.shape_str())));
    }
    let mut d_s = Tensor2::zeros(n * others, 1);
    for i in 0..n {
        for k in 0..others {
            d_s.set(i * others + k, 0, grad_scores.get(i, pair_partner(i, k)));
        }
    }
    let d_edges = dense_backward_into(&params.layers[1], &d_s, &cache.score, grads.layer_mut(1))?;
    let mut d_g = Tensor2::zeros(n, hid);
    for i in 0..n {
        for k in 0..others {
            let row = d_edges.row(i * others + k);
            for (a, b) in d_g.row_mut(i).iter_mut().zip(&row[..hid]) {
                *a += b;
            }
            for (a, b) in d_g.row_mut(pair_partner(i, k)).iter_mut().zip(&row[hid..]) {
                *a += b;
            }
        }
    }
    let (d_node, g_agg) = graph_aggregate_backward(&params.layers[0], &d_g, &cache.aggregate)?;
    let feat_w = d_node.cols() - others;
    let parts = d_node.hsplit(&[others, feat_w])?;
    grads.accumulate_layer(0, &g_agg)?;
    let mut it = parts.into_iter();
    let d_int = it.next().expect("two blocks");
    let d_feat = it.next().expect("two blocks");
    Ok((d_int, d_feat))
}
