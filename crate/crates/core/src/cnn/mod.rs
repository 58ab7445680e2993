//! Convolutional network with hand-written forward and backward passes.

mod config;
pub mod head;
mod io;
pub mod layers;
mod model;
mod tensor;
mod train;

pub use config::{ConvSpec, NetworkConfig, PoolSpec, LRN_STAGES};
pub use io::{read_model, write_model, FORMAT_VERSION};
pub use layers::{
    conv_forward, fc_forward, lrn, max_pool, relu, softmax, softmax_cross_entropy, ConvLayer,
    FcLayer, LrnSpec,
};
pub use model::{argmax, CnnModel, ForwardTrace, Gradients};
pub use tensor::Tensor;
pub use train::{accuracy, train, train_tensors, TrainReport};
