//! Convolutional classifier with attention, implemented from scratch.

pub mod checkpoint;
pub mod layers;
pub mod network;
pub mod real;
pub mod train;

pub use layers::Tensor3;
pub use network::{argmax, Architecture, Network, NetworkConfig, ParamTensor};
pub use real::Real;
pub use train::{train, train_with_callback, Adam, Dataset, EpochRecord, History, TrainConfig};
