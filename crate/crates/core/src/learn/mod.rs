//! Normalization, augmentation, the LSTM itself and its training.

pub mod augment;
pub mod lstm;
pub mod model_file;
pub mod normalize;
pub mod predict;
pub mod train;

pub use augment::augment;
pub use lstm::{loss_and_gradients, loss_and_gradients_from, LstmModel, LstmState, ModelShape};
pub use model_file::{load_model, save_model};
pub use normalize::{fit_normalizer, MinMax, NormalizerStats};
pub use predict::{predict_master, LstmPredictor, MasterPredictor, ReplayOracle};
pub use train::{train, train_with, EpochStats, TrainConfig, TrainReport, TrainedModel};
