use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use jtpred::metrics::{example_f1, LabelSetPair};
use jtpred::model::{predict_probs, train, Dataset, ModelConfig, ModelParams, TrainOptions};
use jtpred::par::{self, Parallelism};
use jtpred::textpipe::EncodedSequence;
use jtpred::{LabelSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Parallelism); 2] = [
    ("sequential", Parallelism::Sequential),
    ("parallel", Parallelism::Parallel),
];

fn config() -> ModelConfig {
    ModelConfig {
        vocab_size: 500,
        embed_dim: 32,
        max_len: 64,
        gru_units: 32,
        lstm_units: 32,
        conv_filters: 16,
        num_labels: 68,
        batch_size: 128,
        epochs: 1,
        ..ModelConfig::default()
    }
}

fn dataset(config: &ModelConfig, n: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let mut data = Dataset::default();
    for i in 0..n {
        let len = rng.gen_range(8..=config.max_len);
        let mut indices: Vec<u32> = (0..len).map(|_| rng.gen_range(2..config.vocab_size as u32)).collect();
        indices.resize(config.max_len, 0);
        data.ids.push(format!("b{i}"));
        data.inputs.push(EncodedSequence {
            indices,
            true_length: len,
        });
        let k = rng.gen_range(1..=3);
        let mut labels = LabelSet::new();
        while labels.len() < k {
            labels.insert(rng.gen_range(0..config.num_labels));
        }
        data.labels.push(labels);
    }
    data
}

fn model() -> (ModelConfig, ModelParams<f32>, Dataset) {
    let config = config();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let emb = Tensor::new(
        vec![config.vocab_size, config.embed_dim],
        (0..config.vocab_size * config.embed_dim)
            .map(|_| rng.gen_range(-0.1..0.1))
            .collect(),
    )
    .unwrap();
    let params = ModelParams::init(&config, emb, 3).unwrap();
    let data = dataset(&config, 128, &mut rng);
    (config, params, data)
}

fn train_step(c: &mut Criterion) {
    let (config, params, data) = model();
    let mut group = c.benchmark_group("train_step_128");
    group.sample_size(10);
    for (name, mode) in MODES {
        let opts = TrainOptions {
            parallelism: mode,
            ..TrainOptions::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| train(&data, &Dataset::default(), params.clone(), &config, opts).unwrap())
        });
    }
    group.finish();
}

fn predict(c: &mut Criterion) {
    let (config, params, data) = model();
    let mut group = c.benchmark_group("predict_probs_128");
    group.sample_size(20);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| predict_probs(&params, &config, black_box(&data.inputs), mode, 32).unwrap())
        });
    }
    group.finish();
}

fn f1(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pairs: Vec<LabelSetPair> = (0..100_000)
        .map(|_| {
            let mut t: LabelSet = (0..68).filter(|_| rng.gen_bool(0.04)).collect();
            t.insert(rng.gen_range(0..68));
            let p: LabelSet = (0..68).filter(|_| rng.gen_bool(0.04)).collect();
            LabelSetPair::new(t, p)
        })
        .collect();
    let mut group = c.benchmark_group("example_f1_100k");
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| {
                let scores = par::map_ordered_with(mode, black_box(&pairs), |p| example_f1(p).unwrap());
                scores.iter().sum::<f64>() / scores.len() as f64
            })
        });
    }
    group.finish();
}

criterion_group!(benches, train_step, predict, f1);
criterion_main!(benches);
