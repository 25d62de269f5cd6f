//! Small from-scratch neural network engine: row-major `f64` tensors,
//! dense and 1-D convolution layers, ReLU/sigmoid/softmax, MSE and
//! cross-entropy losses, inverted dropout, L2 and ADAM.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod network;
pub mod tensor;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layers::{Activation, ConvGeometry};
pub use loss::{binary_accuracy, categorical_accuracy, cross_entropy_loss, mse_loss, Loss};
pub use network::{LayerSpec, Network};
pub use tensor::Tensor;
pub use train::{train, EpochRecord, TrainConfig, TrainReport};
