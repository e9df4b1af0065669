use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{forward_batch, predict_labels, predict_probs, ParamVars, DEFAULT_SHARD_SIZE};
use super::{ModelConfig, ModelParams};
use crate::autodiff::{AdamConfig, AdamState, Tape};
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::metrics::{mean_f1, LabelSetPair};
use crate::par::{self, Parallelism};
use crate::tensor::{Real, Tensor};
use crate::textpipe::EncodedSequence;

/// Encoded inputs with their true label sets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub inputs: Vec<EncodedSequence>,
    pub labels: Vec<LabelSet>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub parallelism: Parallelism,
    pub shard_size: usize,
    /// Fail on the first NaN/inf produced by any op instead of only checking the loss.
    pub checked: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            parallelism: Parallelism::Parallel,
            shard_size: DEFAULT_SHARD_SIZE,
            checked: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_f1: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the best dev F1, or the last epoch when there is no dev set.
    pub params: ModelParams<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Loss and trainable-parameter gradients for one shard of a batch.
///
/// The loss is the summed cross-entropy times `scale`, so shard losses of one
/// batch add up to the batch mean when `scale = 1 / (batch_len * num_labels)`.
pub fn shard_loss_and_grads<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    inputs: &[&EncodedSequence],
    labels: &[&LabelSet],
    scale: T,
    checked: bool,
) -> Result<(T, Vec<Tensor<T>>)> {
    let mut tape = if checked { Tape::checked() } else { Tape::new() };
    let vars = ParamVars::register(&mut tape, params, true, config.freeze_embeddings);
    let probs = forward_batch(&mut tape, &vars, inputs, config)?;
    let targets = multi_hot(labels, config.num_labels);
    let loss = tape.bce_loss_scaled(probs, &targets, scale)?;
    let grads = tape.backward(loss)?;
    let skip = usize::from(config.freeze_embeddings);
    let out = vars
        .all()
        .into_iter()
        .skip(skip)
        .map(|v| grads.get_or_zeros(&tape, v))
        .collect();
    Ok((tape.value(loss).data()[0], out))
}

pub fn multi_hot<T: Real>(labels: &[&LabelSet], num_labels: usize) -> Tensor<T> {
    let mut data = vec![T::zero(); labels.len() * num_labels];
    for (row, set) in labels.iter().enumerate() {
        for l in set.iter().filter(|&l| l < num_labels) {
            data[row * num_labels + l] = T::one();
        }
    }
    Tensor::from_parts(vec![labels.len(), num_labels], data)
}

/// Mean example-F1 of thresholded predictions on `data`.
pub fn dataset_f1<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    data: &Dataset,
    opts: &TrainOptions,
) -> Result<f64> {
    let probs = predict_probs(params, config, &data.inputs, opts.parallelism, opts.shard_size)?;
    let pairs: Vec<LabelSetPair> = probs
        .iter()
        .zip(&data.labels)
        .map(|(p, t)| LabelSetPair::new(t.clone(), predict_labels(p, config.threshold)))
        .collect();
    mean_f1(&pairs)
}

/// Adam training with shuffled mini-batches and best-dev-F1 model selection.
///
/// Shuffling uses ChaCha8 seeded from `config.seed`, so two runs with the same
/// inputs produce identical histories and parameters regardless of thread count.
pub fn train<T: Real>(
    train_set: &Dataset,
    dev_set: &Dataset,
    init: ModelParams<T>,
    config: &ModelConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    init.audit(config)?;
    if train_set.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    if opts.shard_size == 0 {
        return Err(Error::validation("shard_size must be at least 1"));
    }

    let mut params = init;
    let adam_cfg = AdamConfig {
        lr: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_cfg, params.trainable(config.freeze_embeddings));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let labels_per_row = T::from_usize(config.num_labels).expect("fits");

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;
    let mut step = 0usize;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut weighted_loss = 0.0f64;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            step += 1;
            let scale = T::one() / (T::from_usize(batch.len()).expect("fits") * labels_per_row);
            let shards: Vec<&[usize]> = batch.chunks(opts.shard_size).collect();
            let results = par::map_ordered_with(opts.parallelism, &shards, |shard| {
                let inputs: Vec<&EncodedSequence> = shard.iter().map(|&i| &train_set.inputs[i]).collect();
                let labels: Vec<&LabelSet> = shard.iter().map(|&i| &train_set.labels[i]).collect();
                shard_loss_and_grads(&params, config, &inputs, &labels, scale, opts.checked)
            });

            let mut loss = T::zero();
            let mut grads: Option<Vec<Tensor<T>>> = None;
            for r in results {
                let (l, g) = r?;
                loss += l;
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&g) {
                            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            let loss_f = loss.to_f64().unwrap_or(f64::NAN);
            if !loss_f.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    batch: batch_idx,
                    loss: loss_f,
                });
            }
            let grads = grads.expect("batch has at least one shard");
            adam.step(&mut params.trainable_mut(config.freeze_embeddings), &grads)?;
            weighted_loss += loss_f * batch.len() as f64;
        }

        let train_loss = weighted_loss / train_set.len() as f64;
        let dev_f1 = if dev_set.is_empty() {
            None
        } else {
            Some(dataset_f1(&params, config, dev_set, opts)?)
        };
        log::info!(
            "epoch {epoch}/{}: train_loss {train_loss:.6} dev_f1 {}",
            config.epochs,
            dev_f1.map_or_else(|| "-".to_string(), |f| format!("{f:.4}"))
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            dev_f1,
        });
        if let Some(f1) = dev_f1 {
            if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                best = Some((f1, epoch, params.clone()));
            }
        }
    }

    let (params, best_epoch) = match best {
        Some((_, epoch, p)) => (p, epoch),
        None => (params, config.epochs),
    };
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
    })
}
