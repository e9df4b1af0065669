use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyper-parameters of the Bi-GRU-LSTM-CNN network and its training loop.
///
/// Every parameter shape is a function of this struct alone; see
/// [`super::ModelParams::expected_shapes`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub max_len: usize,
    /// Units per direction; the bidirectional output is twice as wide.
    pub gru_units: usize,
    pub lstm_units: usize,
    pub conv_filters: usize,
    pub conv_kernel_widths: Vec<usize>,
    pub num_labels: usize,
    pub threshold: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub freeze_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 2,
            embed_dim: 100,
            max_len: 200,
            gru_units: 100,
            lstm_units: 100,
            conv_filters: 50,
            conv_kernel_widths: vec![3, 5],
            num_labels: 68,
            threshold: 0.5,
            batch_size: 256,
            epochs: 20,
            seed: 42,
            learning_rate: 1e-3,
            freeze_embeddings: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("max_len", self.max_len),
            ("gru_units", self.gru_units),
            ("lstm_units", self.lstm_units),
            ("conv_filters", self.conv_filters),
            ("num_labels", self.num_labels),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::validation(format!("{name} must be at least 1")));
            }
        }
        if self.vocab_size < 2 {
            return Err(Error::validation("vocab_size must cover <pad> and <unk>"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::validation(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.conv_kernel_widths.is_empty() || self.conv_kernel_widths.contains(&0) {
            return Err(Error::validation("conv_kernel_widths must be non-empty and positive"));
        }
        let widest = *self.conv_kernel_widths.iter().max().expect("non-empty");
        if widest > self.max_len {
            return Err(Error::validation(format!(
                "max_len {} is shorter than the widest kernel {widest}",
                self.max_len
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    /// Width of the concatenated pooled conv features feeding the dense layer.
    pub fn feature_width(&self) -> usize {
        self.conv_filters * self.conv_kernel_widths.len()
    }

    /// The small configuration used by tests and the shipped fixture.
    pub fn toy(vocab_size: usize, embed_dim: usize, num_labels: usize) -> Self {
        ModelConfig {
            vocab_size,
            embed_dim,
            max_len: 16,
            gru_units: 4,
            lstm_units: 4,
            conv_filters: 3,
            conv_kernel_widths: vec![3, 5],
            num_labels,
            threshold: 0.5,
            batch_size: 10,
            epochs: 200,
            seed: 7,
            learning_rate: 1e-2,
            freeze_embeddings: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_reference_settings() {
        let c = ModelConfig::default();
        assert_eq!(c.max_len, 200);
        assert_eq!((c.gru_units, c.lstm_units), (100, 100));
        assert_eq!(c.conv_filters, 50);
        assert_eq!(c.conv_kernel_widths, vec![3, 5]);
        assert_eq!(c.num_labels, 68);
        assert_eq!(c.batch_size, 256);
        assert_eq!(c.threshold, 0.5);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_invalid_values() {
        let bad = [
            ModelConfig {
                epochs: 0,
                ..Default::default()
            },
            ModelConfig {
                threshold: 1.0,
                ..Default::default()
            },
            ModelConfig {
                threshold: 0.0,
                ..Default::default()
            },
            ModelConfig {
                gru_units: 0,
                ..Default::default()
            },
            ModelConfig {
                max_len: 4,
                ..Default::default()
            },
            ModelConfig {
                conv_kernel_widths: vec![],
                ..Default::default()
            },
            ModelConfig {
                learning_rate: f64::NAN,
                ..Default::default()
            },
            ModelConfig {
                vocab_size: 1,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
