//! Feedforward networks with dense, convolutional and random-projection
//! layers, trained by exact backpropagation.

pub mod checkpoint;
mod gradcheck;
mod loss;
pub mod models;
mod network;
mod optim;
mod params;
mod spec;
mod train;

pub use gradcheck::{grad_check, gradient_check, GradCheckReport, TensorCheck, GRAD_CHECK_FLOOR, GRAD_CHECK_STEP};
pub use loss::{mean_squared_error, predictions, softmax_cross_entropy};
pub use network::{Cache, Mode, Network};
pub use optim::{lr_at, Optimizer, OptimizerKind, DEFAULT_HALVE_EVERY, DEFAULT_MOMENTUM};
pub use params::{tensor_names, Gradients, LayerParams, Parameters};
pub use spec::{LayerSpec, NetworkSpec, Shape, BN_EPSILON, BN_MOMENTUM};
pub use train::{evaluate, train, EpochRecord, Examples, Metric, Targets, TrainConfig, TrainReport};
