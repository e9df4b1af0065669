//! Checks shared by the per-area test files and the acceptance run.

use jtpred::model::{gru_cell, lstm_cell, GruCell, LstmCell, ModelConfig, ModelParams};
use jtpred::textpipe::{EncodedSequence, PAD};
use jtpred::{LabelSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{check, check_model, reduce, Report};

fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(11)
}

pub fn elementwise_and_linear_primitives() -> Report {
    let mut report = Report::default();
    let mut r = rng();
    let a = rand_t(&mut r, &[3, 4]);
    let b = rand_t(&mut r, &[3, 4]);
    let w = rand_t(&mut r, &[4, 2]);
    let bias = rand_t(&mut r, &[2]);
    let xs = vec![a.clone(), b.clone()];
    report.merge(check("matmul", &[a.clone(), w.clone()], |t, v| {
        let y = t.matmul(v[0], v[1])?;
        reduce(t, y)
    }));
    report.merge(check("add", &xs, |t, v| {
        let y = t.add(v[0], v[1])?;
        reduce(t, y)
    }));
    report.merge(check("sub", &xs, |t, v| {
        let y = t.sub(v[0], v[1])?;
        reduce(t, y)
    }));
    report.merge(check("mul", &xs, |t, v| {
        let y = t.mul(v[0], v[1])?;
        reduce(t, y)
    }));
    report.merge(check("add_bias", &[w.clone(), bias.clone()], |t, v| {
        let y = t.add_bias(v[0], v[1])?;
        reduce(t, y)
    }));
    report.merge(check("affine", &[a.clone(), w, bias], |t, v| {
        let y = t.affine(v[0], v[1], v[2])?;
        reduce(t, y)
    }));
    report.merge(check("scale_shift", std::slice::from_ref(&a), |t, v| {
        let y = t.scale_shift(v[0], -1.7, 0.3)?;
        reduce(t, y)
    }));
    report.merge(check("one_minus", std::slice::from_ref(&a), |t, v| {
        let y = t.one_minus(v[0])?;
        reduce(t, y)
    }));
    report.merge(check("sum", std::slice::from_ref(&a), |t, v| t.sum(v[0])));
    report.merge(check("mean", &[a], |t, v| t.mean(v[0])));
    report
}

pub fn activations() -> Report {
    let mut report = Report::default();
    let mut r = rng();
    let a = rand_t(&mut r, &[4, 5]);
    report.merge(check("sigmoid", std::slice::from_ref(&a), |t, v| {
        let y = t.sigmoid(v[0])?;
        reduce(t, y)
    }));
    report.merge(check("tanh", std::slice::from_ref(&a), |t, v| {
        let y = t.tanh(v[0])?;
        reduce(t, y)
    }));
    report.merge(check("relu", &[a], |t, v| {
        let y = t.relu(v[0])?;
        reduce(t, y)
    }));
    report
}

pub fn shape_primitives() -> Report {
    let mut report = Report::default();
    let mut r = rng();
    let a = rand_t(&mut r, &[2, 3]);
    let b = rand_t(&mut r, &[2, 4]);
    let c = rand_t(&mut r, &[1, 3]);
    report.merge(check("concat1", &[a.clone(), b.clone()], |t, v| {
        let y = t.concat(&[v[0], v[1]], 1)?;
        reduce(t, y)
    }));
    report.merge(check("concat0", &[a.clone(), c], |t, v| {
        let y = t.concat(&[v[0], v[1], v[0]], 0)?;
        reduce(t, y)
    }));
    report.merge(check("slice", std::slice::from_ref(&b), |t, v| {
        let y = t.slice(v[0], 1, 1, 2)?;
        reduce(t, y)
    }));
    report.merge(check(
        "stack_time",
        &[a.clone(), a.clone(), rand_t(&mut r, &[2, 3])],
        |t, v| {
            let y = t.stack_time(v)?;
            reduce(t, y)
        },
    ));
    let table = rand_t(&mut r, &[5, 3]);
    report.merge(check("gather_rows", &[table], |t, v| {
        let y = t.gather_rows(v[0], &[4, 0, 4, 2])?;
        reduce(t, y)
    }));
    let other = rand_t(&mut r, &[2, 3]);
    report.merge(check("select_rows", &[a, other], |t, v| {
        let y = t.select_rows(&[false, true], v[0], v[1])?;
        reduce(t, y)
    }));
    report
}

pub fn convolution_and_pooling() -> Report {
    let mut report = Report::default();
    let mut r = rng();
    let x = rand_t(&mut r, &[2, 7, 3]);
    let w = rand_t(&mut r, &[4, 3, 3]);
    let b = rand_t(&mut r, &[4]);
    report.merge(check("conv1d", &[x.clone(), w, b], |t, v| {
        let y = t.conv1d(v[0], v[1], v[2])?;
        reduce(t, y)
    }));
    report.merge(check("max_pool_time", &[x], |t, v| {
        let y = t.max_pool_time(v[0])?;
        reduce(t, y)
    }));
    report
}

pub fn losses() -> Report {
    let mut report = Report::default();
    let mut r = rng();
    let logits = rand_t(&mut r, &[3, 4]);
    let targets = Tensor::new(vec![3, 4], (0..12).map(|i| f64::from(i % 3 == 0)).collect()).unwrap();
    let tg = targets.clone();
    report.merge(check("bce_loss", std::slice::from_ref(&logits), move |t, v| {
        let p = t.sigmoid(v[0])?;
        t.bce_loss(p, &tg)
    }));
    report.merge(check("bce_loss_scaled", &[logits], move |t, v| {
        let p = t.sigmoid(v[0])?;
        t.bce_loss_scaled(p, &targets, 0.37)
    }));
    report
}

pub fn recurrent_cells() -> Report {
    let mut report = Report::default();
    let mut r = rng();
    let x = rand_t(&mut r, &[2, 3]);
    let h = rand_t(&mut r, &[2, 4]);
    let c = rand_t(&mut r, &[2, 4]);
    let mut gru = vec![x.clone(), h.clone()];
    for _ in 0..3 {
        gru.push(rand_t(&mut r, &[3, 4]));
    }
    for _ in 0..3 {
        gru.push(rand_t(&mut r, &[4, 4]));
    }
    for _ in 0..3 {
        gru.push(rand_t(&mut r, &[4]));
    }
    report.merge(check("gru_cell", &gru, |t, v| {
        let cell = GruCell::from_vars([v[2], v[3], v[4]], [v[5], v[6], v[7]], [v[8], v[9], v[10]], 4);
        let y = gru_cell(t, v[0], v[1], &cell)?;
        reduce(t, y)
    }));

    let mut lstm = vec![x, h, c];
    for _ in 0..4 {
        lstm.push(rand_t(&mut r, &[3, 4]));
    }
    for _ in 0..4 {
        lstm.push(rand_t(&mut r, &[4, 4]));
    }
    for _ in 0..4 {
        lstm.push(rand_t(&mut r, &[4]));
    }
    report.merge(check("lstm_cell", &lstm, |t, v| {
        let cell = LstmCell::from_vars(
            [v[3], v[4], v[5], v[6]],
            [v[7], v[8], v[9], v[10]],
            [v[11], v[12], v[13], v[14]],
            4,
        );
        let (hn, cn) = lstm_cell(t, v[0], v[1], v[2], &cell)?;
        let both = t.concat(&[hn, cn], 1)?;
        reduce(t, both)
    }));
    report
}

pub fn toy_gradcheck_setup() -> (ModelConfig, ModelParams<f64>, Vec<EncodedSequence>, Vec<LabelSet>) {
    let config = ModelConfig {
        max_len: 6,
        ..ModelConfig::toy(20, 8, 3)
    };
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let mut params = ModelParams::<f64>::zeros(&config);
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v = r.gen_range(-0.5..0.5);
        }
    }
    let seq = |idx: &[u32]| {
        let mut indices = idx.to_vec();
        let true_length = indices.len();
        indices.resize(6, 0);
        EncodedSequence { indices, true_length }
    };
    let batch = vec![seq(&[3, 7, 7, 19, 2, 5]), seq(&[4, 1, 12, 9]), seq(&[18, 6])];
    let labels = vec![LabelSet::from([0, 2]), LabelSet::from([1]), LabelSet::from([0, 1, 2])];
    (config, params, batch, labels)
}

/// Every primitive suite, by name.
pub fn primitive_suites() -> Vec<(&'static str, Report)> {
    vec![
        ("elementwise and linear", elementwise_and_linear_primitives()),
        ("activations", activations()),
        ("shape", shape_primitives()),
        ("conv and pool", convolution_and_pooling()),
        ("losses", losses()),
        ("recurrent cells", recurrent_cells()),
    ]
}

pub fn full_toy_model() -> Report {
    let (config, params, batch, labels) = toy_gradcheck_setup();
    check_model(&params, &config, &batch, &labels)
}

/// Uniform(-0.6, 0.6) in every tensor, PAD row included.
pub fn randomized(config: &ModelConfig, seed: u64) -> ModelParams<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::<f64>::zeros(config);
    for t in p.tensors_mut() {
        for v in t.data_mut() {
            *v = r.gen_range(-0.6..0.6);
        }
    }
    p
}

pub fn seq(idx: &[u32], max_len: usize) -> EncodedSequence {
    let mut indices = idx.to_vec();
    let true_length = indices.len();
    indices.resize(max_len, PAD);
    EncodedSequence { indices, true_length }
}

/// Largest deviation between the model and the straight-line oracle on a few toy sequences.
pub fn forward_oracle_gap() -> f64 {
    let config = ModelConfig {
        max_len: 6,
        ..ModelConfig::toy(20, 8, 3)
    };
    let params = randomized(&config, 1);
    let seqs = [
        seq(&[3, 7, 7, 19, 2, 5], 6),
        seq(&[4, 1, 12, 9], 6),
        seq(&[18], 6),
        seq(&[], 6),
    ];
    let batched =
        jtpred::model::predict_probs(&params, &config, &seqs, jtpred::par::Parallelism::Sequential, 3).unwrap();
    let mut gap = 0.0f64;
    for (s, b) in seqs.iter().zip(&batched) {
        let got = jtpred::model::forward(s, &params, &config).unwrap();
        let want = super::oracle::forward(s, &params, &config);
        for ((g, bb), w) in got.iter().zip(b).zip(&want) {
            gap = gap.max((g - w).abs()).max((bb - w).abs());
        }
    }
    gap
}
