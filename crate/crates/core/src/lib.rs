//! Multi-label job-title prediction from Vietnamese and English job descriptions.
//!
//! The crate covers corpus ingestion, text preprocessing, pretrained embeddings,
//! a small reverse-mode autodiff engine, the Bi-GRU-LSTM-CNN model and
//! example-based F1 evaluation.

pub mod autodiff;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod labels;
pub mod metrics;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod tensor;
pub mod textpipe;

pub use error::{Error, Result};
pub use labels::LabelSet;
pub use tensor::{Real, Tensor};
