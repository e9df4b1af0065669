//! Central finite differences against the tape's analytic gradients, in f64.

use jtpred::autodiff::{Tape, Var};
use jtpred::model::{forward_batch, multi_hot, ModelConfig, ModelParams, ParamVars};
use jtpred::textpipe::EncodedSequence;
use jtpred::{LabelSet, Result, Tensor};

pub const H: f64 = 1e-5;
pub const RTOL: f64 = 1e-4;
pub const ATOL: f64 = 1e-6;

#[derive(Debug, Default)]
pub struct Report {
    pub checked: usize,
    pub failures: Vec<String>,
    pub max_abs_err: f64,
}

impl Report {
    fn compare(&mut self, what: &str, analytic: f64, numeric: f64) {
        self.checked += 1;
        let err = (analytic - numeric).abs();
        self.max_abs_err = self.max_abs_err.max(err);
        if err > ATOL + RTOL * analytic.abs().max(numeric.abs()) {
            self.failures
                .push(format!("{what}: analytic {analytic:e} vs numeric {numeric:e}"));
        }
    }

    pub fn merge(&mut self, other: Report) {
        self.checked += other.checked;
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        self.failures.extend(other.failures);
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

/// Fixed pseudo-random weights so a non-scalar output can be reduced to a scalar
/// whose gradient exercises every output element differently.
pub fn weights_like(shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|i| ((i as f64 + 1.0) * 0.7548776662).sin() + 0.1).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `sum(out * W)` with [`weights_like`] weights.
pub fn reduce(tape: &mut Tape<'_, f64>, out: Var) -> Result<Var> {
    let w = tape.constant(weights_like(tape.value(out).shape()));
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

fn eval_loss<F>(inputs: &[Tensor<f64>], f: &F) -> f64
where
    F: Fn(&mut Tape<'_, f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant_ref(t)).collect();
    let loss = f(&mut tape, &vars).unwrap();
    tape.value(loss).data()[0]
}

/// Checks d loss / d input for every element of every input.
pub fn check<F>(name: &str, inputs: &[Tensor<f64>], f: F) -> Report
where
    F: Fn(&mut Tape<'_, f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let loss = f(&mut tape, &vars).unwrap();
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| grads.get_or_zeros(&tape, v)).collect();

    let mut report = Report::default();
    let mut work = inputs.to_vec();
    for (i, a) in analytic.iter().enumerate() {
        for j in 0..work[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + H;
            let up = eval_loss(&work, &f);
            work[i].data_mut()[j] = orig - H;
            let down = eval_loss(&work, &f);
            work[i].data_mut()[j] = orig;
            report.compare(&format!("{name}[{i}][{j}]"), a.data()[j], (up - down) / (2.0 * H));
        }
    }
    report
}

/// Mean cross-entropy of the full network on one batch.
pub fn model_loss(
    params: &ModelParams<f64>,
    config: &ModelConfig,
    batch: &[EncodedSequence],
    labels: &[LabelSet],
) -> f64 {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params, false, false);
    let refs: Vec<&EncodedSequence> = batch.iter().collect();
    let probs = forward_batch(&mut tape, &vars, &refs, config).unwrap();
    let label_refs: Vec<&LabelSet> = labels.iter().collect();
    let loss = tape
        .bce_loss(probs, &multi_hot(&label_refs, config.num_labels))
        .unwrap();
    tape.value(loss).data()[0]
}

/// Checks the gradient of [`model_loss`] with respect to every parameter element.
pub fn check_model(
    params: &ModelParams<f64>,
    config: &ModelConfig,
    batch: &[EncodedSequence],
    labels: &[LabelSet],
) -> Report {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params, true, false);
    let refs: Vec<&EncodedSequence> = batch.iter().collect();
    let probs = forward_batch(&mut tape, &vars, &refs, config).unwrap();
    let label_refs: Vec<&LabelSet> = labels.iter().collect();
    let loss = tape
        .bce_loss(probs, &multi_hot(&label_refs, config.num_labels))
        .unwrap();
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<Tensor<f64>> = vars.all().into_iter().map(|v| grads.get_or_zeros(&tape, v)).collect();
    drop(tape);

    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let mut work = params.clone();
    let mut report = Report::default();
    for (i, a) in analytic.iter().enumerate() {
        for j in 0..a.len() {
            let orig = work.tensors()[i].data()[j];
            work.tensors_mut()[i].data_mut()[j] = orig + H;
            let up = model_loss(&work, config, batch, labels);
            work.tensors_mut()[i].data_mut()[j] = orig - H;
            let down = model_loss(&work, config, batch, labels);
            work.tensors_mut()[i].data_mut()[j] = orig;
            report.compare(&format!("{}[{j}]", names[i]), a.data()[j], (up - down) / (2.0 * H));
        }
    }
    report
}
