//! The Bi-GRU-LSTM-CNN network: configuration, parameters, forward pass, training and checkpoints.

mod cells;
mod checkpoint;
mod config;
mod network;
mod params;
mod train;

pub use cells::{bidirectional, gru_cell, lstm_cell, GruCell, LstmCell, LstmState, RecurrentCell};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::ModelConfig;
pub use network::{forward, forward_batch, predict_labels, predict_probs, ParamVars, Prediction, DEFAULT_SHARD_SIZE};
pub use params::{expected_shapes, ConvWeights, GruWeights, LstmWeights, ModelParams};
pub use train::{dataset_f1, multi_hot, shard_loss_and_grads, train, Dataset, EpochRecord, TrainOptions, TrainOutcome};
