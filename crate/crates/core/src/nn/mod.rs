//! CNN-LSTM window classifier.
//!
//! Architecture: valid 1-D convolution + ReLU, dropout, a single LSTM layer whose last
//! hidden state feeds dropout, a dense layer and softmax. Gradients are computed by
//! hand (backpropagation through time) and verified against central differences in
//! [`gradcheck`].

mod config;
mod format;
pub mod gradcheck;
mod model;
mod params;
mod train;

pub use config::{ModelConfig, Padding, TrainingConfig};
pub use format::{load_model, save_model, ModelBundle, MODEL_KIND};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use model::{
    backward, batch_from_windows, forward_infer, forward_train, loss, predict, predict_batch,
    ForwardCache, Prediction,
};
pub use params::{init_model, ModelParams, TENSOR_NAMES};
pub use train::{train, train_on_indices, EpochRecord, TrainOutcome, TrainingHistory};
