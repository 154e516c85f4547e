//! Dense kernels with hand-written backward passes, plus Adam and a
//! finite-difference checker. Everything is `f64`.

pub mod adam;
pub mod aggregate;
pub mod dense;
pub mod gradcheck;
pub mod gru;
pub mod mlp;
pub mod params;
pub mod tensor;

pub use adam::{adam_step, OptimizerState};
pub use aggregate::{graph_aggregate, graph_aggregate_backward, neighbor_mean, AggregateCache};
pub use dense::{dense_backward, dense_backward_into, dense_forward, sigmoid, softmax_row, Activation, DenseCache};
pub use gradcheck::gradcheck;
pub use gru::{gru_backward_into, gru_backward_layers, gru_cell_backward, gru_cell_forward, gru_forward_layers, gru_params, gru_widths, gru_zero_params, GruCache};
pub use mlp::{backward_with, forward_with, mlp_backward, mlp_backward_into, mlp_forward, Mlp, MlpCache};
pub use params::{GradStore, Layer, LayerKind, ParamStore};
pub use tensor::Tensor2;
