use std::path::{Path, PathBuf};

use jtpred::corpus::UnknownLabelPolicy;
use jtpred::model::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Flat run configuration. Relative paths are resolved against the config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train_corpus: Option<PathBuf>,
    pub test_corpus: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    /// `"builtin"` or a catalog file.
    pub catalog: String,
    pub output_dir: PathBuf,
    pub unknown_labels: UnknownLabelPolicy,
    pub dev_fraction: f64,
    pub split_seed: u64,
    pub min_freq: usize,

    pub embed_dim: usize,
    pub max_len: usize,
    pub gru_units: usize,
    pub lstm_units: usize,
    pub conv_filters: usize,
    pub conv_kernel_widths: Vec<usize>,
    pub threshold: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub freeze_embeddings: bool,
    pub shard_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        RunConfig {
            train_corpus: None,
            test_corpus: None,
            vectors: None,
            catalog: "builtin".to_string(),
            output_dir: PathBuf::from("run"),
            unknown_labels: UnknownLabelPolicy::Abort,
            dev_fraction: 0.1,
            split_seed: 42,
            min_freq: jtpred::textpipe::DEFAULT_MIN_FREQ,
            embed_dim: m.embed_dim,
            max_len: m.max_len,
            gru_units: m.gru_units,
            lstm_units: m.lstm_units,
            conv_filters: m.conv_filters,
            conv_kernel_widths: m.conv_kernel_widths,
            threshold: m.threshold,
            batch_size: m.batch_size,
            epochs: m.epochs,
            seed: m.seed,
            learning_rate: m.learning_rate,
            freeze_embeddings: m.freeze_embeddings,
            shard_size: jtpred::model::DEFAULT_SHARD_SIZE,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.train_corpus.as_mut() {
            fix(p);
        }
        if let Some(p) = self.test_corpus.as_mut() {
            fix(p);
        }
        if let Some(p) = self.vectors.as_mut() {
            fix(p);
        }
        fix(&mut self.output_dir);
        if self.catalog != "builtin" {
            let mut p = PathBuf::from(&self.catalog);
            fix(&mut p);
            self.catalog = p.display().to_string();
        }
    }

    /// The model half of the config. `vocab_size` is a placeholder filled in after the vocabulary is built.
    pub fn model_config(&self, num_labels: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: 2,
            embed_dim: self.embed_dim,
            max_len: self.max_len,
            gru_units: self.gru_units,
            lstm_units: self.lstm_units,
            conv_filters: self.conv_filters,
            conv_kernel_widths: self.conv_kernel_widths.clone(),
            num_labels,
            threshold: self.threshold,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            learning_rate: self.learning_rate,
            freeze_embeddings: self.freeze_embeddings,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let train = self
            .train_corpus
            .as_ref()
            .ok_or_else(|| CliError::Invalid("train_corpus is not set".into()))?;
        let mut inputs = vec![train];
        inputs.extend(self.test_corpus.as_ref());
        inputs.extend(self.vectors.as_ref());
        for p in inputs {
            if !p.is_file() {
                return Err(CliError::Invalid(format!("{}: no such file", p.display())));
            }
        }
        if self.catalog != "builtin" && !Path::new(&self.catalog).is_file() {
            return Err(CliError::Invalid(format!("{}: no such catalog file", self.catalog)));
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return Err(CliError::Invalid(format!(
                "dev_fraction must lie in (0, 1), got {}",
                self.dev_fraction
            )));
        }
        if self.min_freq == 0 {
            return Err(CliError::Invalid("min_freq must be at least 1".into()));
        }
        if self.shard_size == 0 {
            return Err(CliError::Invalid("shard_size must be at least 1".into()));
        }
        self.model_config(1).validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let c = RunConfig {
            train_corpus: Some("a.jsonl".into()),
            epochs: 3,
            ..Default::default()
        };
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"epoch": 3}"#).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut c = RunConfig {
            train_corpus: Some("t.jsonl".into()),
            catalog: "cat.txt".into(),
            ..Default::default()
        };
        c.resolve_paths(Path::new("/data/run"));
        assert_eq!(c.train_corpus.unwrap(), PathBuf::from("/data/run/t.jsonl"));
        assert_eq!(c.catalog, "/data/run/cat.txt");
        assert_eq!(c.output_dir, PathBuf::from("/data/run/run"));
    }
}
