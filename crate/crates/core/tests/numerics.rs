use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use marlperf_core::graph::{CommGraph, Provenance};
use marlperf_core::numerics::{adam_step, dense_forward, graph_aggregate, Activation, GradStore, Layer, LayerKind, Mlp, OptimizerState, ParamStore, Tensor2};

fn tensor(rows: usize, cols: usize) -> impl Strategy<Value = Tensor2> {
    proptest::collection::vec(-5.0..5.0f64, rows * cols).prop_map(move |d| Tensor2::from_vec(rows, cols, d).unwrap())
}

fn shaped() -> impl Strategy<Value = (Tensor2, u64)> {
    (1usize..5, 1usize..6).prop_flat_map(|(r, c)| (tensor(r, c), any::<u64>()))
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions((x, seed) in shaped(), out in 1usize..6) {
        let layer = Layer::uniform(x.cols(), out, &mut ChaCha8Rng::seed_from_u64(seed));
        let (y, _) = dense_forward(&x, &layer, Activation::Softmax).unwrap();
        for row in y.iter_rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn complete_graph_aggregate_is_permutation_equivariant(
        n in 2usize..6,
        f in 1usize..4,
        seed in any::<u64>(),
        perm_seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor2::from_vec(n, f, (0..n * f).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect()).unwrap();
        let layer = Layer::uniform(f, 3, &mut rng);
        let g = CommGraph::complete(n, Provenance::Predefined);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(perm_seed));
        // Row i of x moves to row perm[i].
        let mut px = Tensor2::zeros(n, f);
        for i in 0..n {
            px.row_mut(perm[i]).copy_from_slice(x.row(i));
        }
        let (y, _) = graph_aggregate(&x, &g, &layer, Activation::Tanh).unwrap();
        let (py, _) = graph_aggregate(&px, &g.permuted(&perm), &layer, Activation::Tanh).unwrap();
        for i in 0..n {
            for (a, b) in y.row(i).iter().zip(py.row(perm[i])) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adam_with_zero_gradient_is_identity(seed in any::<u64>(), steps in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mlp = Mlp::new(&[3, 4, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let mut p = mlp.params.clone();
        let mut st = OptimizerState::new(&p, 1e-2);
        let g = GradStore::zeros_for(&p);
        for _ in 0..steps {
            adam_step(&mut p, &g, &mut st).unwrap();
        }
        prop_assert_eq!(p, mlp.params);
    }

    #[test]
    fn soft_update_is_exact_elementwise(seed in any::<u64>(), tau in 0.0..=1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = ParamStore::new(vec![Layer::uniform(3, 2, &mut rng), Layer::uniform(2, 1, &mut rng)], vec![LayerKind::Dense; 2]);
        let old = ParamStore::new(vec![Layer::uniform(3, 2, &mut rng), Layer::uniform(2, 1, &mut rng)], vec![LayerKind::Dense; 2]);
        let mut target = old.clone();
        target.soft_update_from(&src, tau).unwrap();
        for ((t, s), o) in target.iter_scalars().zip(src.iter_scalars()).zip(old.iter_scalars()) {
            prop_assert_eq!(t, tau * s + (1.0 - tau) * o);
        }
    }
}

#[test]
fn soft_update_rejects_mismatched_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut a = ParamStore::single(Layer::uniform(3, 2, &mut rng), LayerKind::Dense);
    let b = ParamStore::single(Layer::uniform(2, 2, &mut rng), LayerKind::Dense);
    assert!(a.soft_update_from(&b, 0.5).is_err());
}
