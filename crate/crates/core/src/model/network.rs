//! The Bi-GRU-LSTM-CNN forward pass.
//!
//! ```text
//! tokens ─ embedding ─ Bi-GRU ─ Bi-LSTM ─┬─ conv(k=3) ─ relu ─ max-pool ─┐
//!                                       └─ conv(k=5) ─ relu ─ max-pool ─┴─ concat ─ dense ─ sigmoid
//! ```

use super::cells::{bidirectional, GruCell, LstmCell};
use super::{ModelConfig, ModelParams};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::par::{self, Parallelism};
use crate::tensor::{Real, Tensor};
use crate::textpipe::EncodedSequence;

/// Default number of sequences per tape. Gradients of shards are summed in
/// shard order, so results do not depend on how many threads run them.
pub const DEFAULT_SHARD_SIZE: usize = 32;

/// Parameter tensors registered as tape leaves.
pub struct ParamVars {
    pub embedding: Var,
    pub gru_fwd: GruCell,
    pub gru_bwd: GruCell,
    pub lstm_fwd: LstmCell,
    pub lstm_bwd: LstmCell,
    pub convs: Vec<(Var, Var)>,
    pub dense_w: Var,
    pub dense_b: Var,
}

impl ParamVars {
    /// `trainable = false` registers everything as constants (inference).
    pub fn register<'a, T: Real>(
        tape: &mut Tape<'a, T>,
        params: &'a ModelParams<T>,
        trainable: bool,
        freeze_embeddings: bool,
    ) -> Self {
        let embedding = if trainable && !freeze_embeddings {
            tape.param(&params.embedding)
        } else {
            tape.constant_ref(&params.embedding)
        };
        let mut reg = |t: &'a Tensor<T>| if trainable { tape.param(t) } else { tape.constant_ref(t) };
        let convs: Vec<(Var, Var)> = params.convs.iter().map(|c| (reg(&c.filters), reg(&c.bias))).collect();
        let dense_w = reg(&params.dense_w);
        let dense_b = reg(&params.dense_b);
        ParamVars {
            embedding,
            gru_fwd: GruCell::register(tape, &params.gru_fwd, trainable),
            gru_bwd: GruCell::register(tape, &params.gru_bwd, trainable),
            lstm_fwd: LstmCell::register(tape, &params.lstm_fwd, trainable),
            lstm_bwd: LstmCell::register(tape, &params.lstm_bwd, trainable),
            convs,
            dense_w,
            dense_b,
        }
    }

    /// All vars in [`ModelParams::tensors`] order.
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        out.extend(self.gru_fwd.vars());
        out.extend(self.gru_bwd.vars());
        out.extend(self.lstm_fwd.vars());
        out.extend(self.lstm_bwd.vars());
        for &(f, b) in &self.convs {
            out.push(f);
            out.push(b);
        }
        out.push(self.dense_w);
        out.push(self.dense_b);
        out
    }
}

/// Probabilities `[B, num_labels]` for a batch of encoded sequences.
pub fn forward_batch<'a, T: Real>(
    tape: &mut Tape<'a, T>,
    vars: &ParamVars,
    batch: &[&EncodedSequence],
    config: &ModelConfig,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::validation("forward on an empty batch"));
    }
    let steps = config.max_len;
    for seq in batch {
        if seq.indices.len() != steps || seq.true_length > steps {
            return Err(Error::Shape {
                op: "forward",
                lhs: vec![seq.indices.len()],
                rhs: vec![steps],
            });
        }
    }
    let lengths: Vec<usize> = batch.iter().map(|s| s.true_length).collect();

    let embedding = vars.embedding;
    let embed_at = |tape: &mut Tape<'a, T>, t: usize| {
        let idx: Vec<usize> = batch.iter().map(|s| s.indices[t] as usize).collect();
        tape.gather_rows(embedding, &idx)
    };
    let gru_out = bidirectional(tape, steps, &lengths, embed_at, &vars.gru_fwd, &vars.gru_bwd)?;
    let lstm_out = bidirectional(
        tape,
        steps,
        &lengths,
        |_: &mut Tape<'a, T>, t: usize| Ok(gru_out[t]),
        &vars.lstm_fwd,
        &vars.lstm_bwd,
    )?;

    let seq = tape.stack_time(&lstm_out)?;
    let mut pooled = Vec::with_capacity(vars.convs.len());
    for &(filters, bias) in &vars.convs {
        let conv = tape.conv1d(seq, filters, bias)?;
        let act = tape.relu(conv)?;
        pooled.push(tape.max_pool_time(act)?);
    }
    let features = tape.concat(&pooled, 1)?;
    let logits = tape.affine(features, vars.dense_w, vars.dense_b)?;
    tape.sigmoid(logits)
}

/// Label probabilities for one sequence.
pub fn forward<T: Real>(encoded: &EncodedSequence, params: &ModelParams<T>, config: &ModelConfig) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params, false, false);
    let probs = forward_batch(&mut tape, &vars, &[encoded], config)?;
    Ok(tape.value(probs).data().to_vec())
}

/// Row-wise probabilities for many sequences, computed shard by shard.
pub fn predict_probs<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    seqs: &[EncodedSequence],
    parallelism: Parallelism,
    shard_size: usize,
) -> Result<Vec<Vec<T>>> {
    let shard_size = shard_size.max(1);
    let shards: Vec<&[EncodedSequence]> = seqs.chunks(shard_size).collect();
    let per_shard = par::map_ordered_with(parallelism, &shards, |shard| -> Result<Vec<Vec<T>>> {
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, params, false, false);
        let refs: Vec<&EncodedSequence> = shard.iter().collect();
        let probs = forward_batch(&mut tape, &vars, &refs, config)?;
        Ok(tape
            .value(probs)
            .data()
            .chunks(config.num_labels)
            .map(<[T]>::to_vec)
            .collect())
    });
    let mut out = Vec::with_capacity(seqs.len());
    for shard in per_shard {
        out.extend(shard?);
    }
    Ok(out)
}

/// Indices whose probability is strictly above `threshold`. May be empty.
pub fn predict_labels<T: Real>(probs: &[T], threshold: f64) -> LabelSet {
    probs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.to_f64().is_some_and(|p| p > threshold))
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub probs: Vec<T>,
    pub labels: LabelSet,
}

impl<T: Real> Prediction<T> {
    pub fn from_probs(probs: Vec<T>, threshold: f64) -> Self {
        let labels = predict_labels(&probs, threshold);
        Prediction { probs, labels }
    }
}
