//! Mean-over-in-neighbors graph aggregation followed by a dense layer.

use super::dense::{dense_backward, dense_forward, Activation, DenseCache};
use super::params::Layer;
use super::tensor::Tensor2;
use crate::error::{Error, Result};
use crate::graph::CommGraph;

#[derive(Clone, Debug)]
pub struct AggregateCache {
    in_neighbors: Vec<Vec<usize>>,
    dense: DenseCache,
}

/// Row `i` of the result is the mean of `features[j]` over in-neighbors `j`; zero if none.
pub fn neighbor_mean(features: &Tensor2, graph: &CommGraph) -> Result<(Tensor2, Vec<Vec<usize>>)> {
    if graph.n() != features.rows() {
        return Err(Error::dim(
            "graph_aggregate",
            format!("adjacency {}x{}", graph.n(), graph.n()),
            format!("features {}", features.shape_str()),
        ));
    }
    let n = graph.n();
    let mut mean = Tensor2::zeros(n, features.cols());
    let mut lists = Vec::with_capacity(n);
    for i in 0..n {
        let nbrs = graph.in_neighbors(i);
        if !nbrs.is_empty() {
            let inv = 1.0 / nbrs.len() as f64;
            let row = mean.row_mut(i);
            for &j in &nbrs {
                for (m, &f) in row.iter_mut().zip(features.row(j)) {
                    *m += f * inv;
                }
            }
        }
        lists.push(nbrs);
    }
    Ok((mean, lists))
}

pub fn graph_aggregate(
    features: &Tensor2,
    graph: &CommGraph,
    layer: &Layer,
    activation: Activation,
) -> Result<(Tensor2, AggregateCache)> {
    let (mean, in_neighbors) = neighbor_mean(features, graph)?;
    let (out, dense) = dense_forward(&mean, layer, activation)?;
    Ok((out, AggregateCache { in_neighbors, dense }))
}

/// Returns (∂L/∂features, ∂L/∂layer).
pub fn graph_aggregate_backward(
    layer: &Layer,
    grad_out: &Tensor2,
    cache: &AggregateCache,
) -> Result<(Tensor2, Layer)> {
    let (g_mean, g_layer) = dense_backward(layer, grad_out, &cache.dense)?;
    let mut g_feat = Tensor2::zeros(g_mean.rows(), g_mean.cols());
    for (i, nbrs) in cache.in_neighbors.iter().enumerate() {
        if nbrs.is_empty() {
            continue;
        }
        let inv = 1.0 / nbrs.len() as f64;
        let gi = g_mean.row(i).to_vec();
        for &j in nbrs {
            for (g, v) in g_feat.row_mut(j).iter_mut().zip(&gi) {
                *g += v * inv;
            }
        }
    }
    Ok((g_feat, g_layer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Provenance;

    #[test]
    fn empty_graph_yields_activated_bias() {
        let layer = Layer {
            weights: Tensor2::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            bias: vec![0.3, -0.2],
        };
        let x = Tensor2::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let g = CommGraph::empty(3, Provenance::Predefined);
        let (out, _) = graph_aggregate(&x, &g, &layer, Activation::Tanh).unwrap();
        for row in out.iter_rows() {
            assert_eq!(row, &[0.3f64.tanh(), (-0.2f64).tanh()]);
        }
    }

    #[test]
    fn complete_graph_of_identical_rows_reproduces_row() {
        let f = [0.25, -1.5, 2.0];
        let x = Tensor2::from_rows(&[f, f, f, f]).unwrap();
        let layer = Layer {
            weights: Tensor2::identity(3),
            bias: vec![0.0; 3],
        };
        let g = CommGraph::complete(4, Provenance::Learnt);
        let (out, _) = graph_aggregate(&x, &g, &layer, Activation::Identity).unwrap();
        for row in out.iter_rows() {
            for (a, b) in row.iter().zip(&f) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adjacency_mismatch_is_dimension_error() {
        let layer = Layer::zeros(2, 2);
        let g = CommGraph::complete(3, Provenance::Learnt);
        let err = graph_aggregate(&Tensor2::zeros(4, 2), &g, &layer, Activation::Identity).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }
}
