//! Two-branch dilated temporal convolutional network with compact bilinear
//! fusion, trained on magnitude spectrogram windows.

mod io;
mod layers;
mod model;
mod optim;
mod train;

pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, FORMAT_VERSION, MAGIC};
pub use layers::{Activation, BatchNorm, BlockGrad, ConvBlock, ConvGrad, ConvLayer, Conv1d, LayerGrad};
pub use model::{mse_grad, mse_loss, Architecture, FeatureScale, ForwardCache, Fusion, Gradients, InputMode, TcnModel};
pub use optim::{AdamConfig, AdamState};
pub use train::{evaluate_loss, train, AnalysisWindow, EpochRecord, TrainConfig, TrainHistory};
