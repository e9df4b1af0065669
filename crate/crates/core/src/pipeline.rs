//! End-to-end glue: records to encoded datasets, training from a split, and
//! prediction or evaluation with a loaded checkpoint.

use crate::corpus::{CorpusSplit, JobRecord, LabelCatalog};
use crate::embed::{build_embedding_matrix, PretrainedVectors};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport, LabelSetPair, MatchMode};
use crate::model::{
    predict_probs, train, Checkpoint, Dataset, EpochRecord, ModelConfig, ModelParams, Prediction, TrainOptions,
};
use crate::tensor::Real;
use crate::textpipe::{build_vocab, encode, encode_text, preprocess, Vocabulary};

/// Encodes records against `vocab`, truncating or padding to `max_len`.
pub fn encode_records(records: &[JobRecord], vocab: &Vocabulary, max_len: usize) -> Dataset {
    Dataset {
        ids: records.iter().map(|r| r.id.clone()).collect(),
        inputs: records
            .iter()
            .map(|r| encode(&preprocess(&r.description), vocab, max_len))
            .collect(),
        labels: records.iter().map(|r| r.labels.clone()).collect(),
    }
}

/// Vocabulary built from the training records only.
pub fn train_vocab(records: &[JobRecord], min_freq: usize) -> Result<Vocabulary> {
    let docs: Vec<Vec<String>> = records.iter().map(|r| preprocess(&r.description)).collect();
    build_vocab(&docs, min_freq)
}

#[derive(Clone, Debug)]
pub struct TrainedModel<T> {
    pub checkpoint: Checkpoint<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Vocabulary entries that were not covered by the pretrained vectors.
    pub oov_count: usize,
}

/// Builds the vocabulary and embedding matrix, initializes parameters and trains.
///
/// `config.vocab_size` is overwritten with the built vocabulary size, and
/// `config.embed_dim` with the vectors' dimension when `vectors` is given.
pub fn train_from_split<T: Real>(
    split: &CorpusSplit,
    catalog: &LabelCatalog,
    vectors: Option<&PretrainedVectors<T>>,
    mut config: ModelConfig,
    min_freq: usize,
    opts: &TrainOptions,
) -> Result<TrainedModel<T>> {
    if split.train.is_empty() {
        return Err(Error::validation("training split is empty"));
    }
    if config.num_labels != catalog.len() {
        return Err(Error::validation(format!(
            "num_labels is {} but the catalog has {} titles",
            config.num_labels,
            catalog.len()
        )));
    }
    let vocab = train_vocab(&split.train, min_freq)?;
    config.vocab_size = vocab.len();
    let random;
    let vectors = match vectors {
        Some(v) => {
            config.embed_dim = v.dim;
            v
        }
        None => {
            random = PretrainedVectors::empty(config.embed_dim, "random")?;
            &random
        }
    };
    config.validate()?;
    let table = build_embedding_matrix(&vocab, vectors, config.seed)?;
    log::info!(
        "vocabulary {} tokens, {} without a pretrained vector",
        vocab.len(),
        table.oov_count
    );
    let init = ModelParams::init(&config, table.matrix, config.seed)?;
    let train_set = encode_records(&split.train, &vocab, config.max_len);
    let dev_set = encode_records(&split.dev, &vocab, config.max_len);
    let outcome = train(&train_set, &dev_set, init, &config, opts)?;
    Ok(TrainedModel {
        checkpoint: Checkpoint::new(config, outcome.params, vocab, catalog.clone())?,
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        oov_count: table.oov_count,
    })
}

impl<T: Real> Checkpoint<T> {
    pub fn predict_texts<S: AsRef<str>>(&self, texts: &[S], opts: &TrainOptions) -> Result<Vec<Prediction<T>>> {
        let seqs: Vec<_> = texts
            .iter()
            .map(|t| encode_text(t.as_ref(), &self.vocab, self.config.max_len))
            .collect();
        if seqs.is_empty() {
            return Ok(Vec::new());
        }
        let probs = predict_probs(&self.params, &self.config, &seqs, opts.parallelism, opts.shard_size)?;
        Ok(probs
            .into_iter()
            .map(|p| Prediction::from_probs(p, self.config.threshold))
            .collect())
    }

    /// Truth/prediction pairs keyed by record id.
    pub fn label_pairs(&self, records: &[JobRecord], opts: &TrainOptions) -> Result<Vec<(String, LabelSetPair)>> {
        let texts: Vec<&str> = records.iter().map(|r| r.description.as_str()).collect();
        let preds = self.predict_texts(&texts, opts)?;
        Ok(records
            .iter()
            .zip(preds)
            .map(|(r, p)| (r.id.clone(), LabelSetPair::new(r.labels.clone(), p.labels)))
            .collect())
    }

    pub fn evaluate(
        &self,
        records: &[JobRecord],
        mode: MatchMode,
        sample_limit: usize,
        opts: &TrainOptions,
    ) -> Result<EvalReport> {
        if records.is_empty() {
            return Err(Error::validation("evaluation corpus is empty"));
        }
        let pairs = self.label_pairs(records, opts)?;
        evaluate(&pairs, &self.catalog, mode, sample_limit)
    }
}
