use std::collections::BTreeMap;

use jtpred::corpus::{compute_stats, dev_count, split_corpus, JobRecord, LabelCatalog};
use jtpred::embed::read_vectors;
use jtpred::metrics::{exact_match_table, example_f1, mean_f1, LabelSetPair, MatchMode};
use jtpred::model::{expected_shapes, predict_labels, ModelConfig, ModelParams};
use jtpred::textpipe::{build_vocab, clean_text, decode, encode, tokenize, Vocabulary, PAD};
use jtpred::{LabelSet, Tensor};
use proptest::collection::{btree_set, vec};
use proptest::prelude::*;

fn label_set(max: usize) -> impl Strategy<Value = LabelSet> {
    btree_set(0..max, 1..=7).prop_map(|s| s.into_iter().collect())
}

fn maybe_empty_set(max: usize) -> impl Strategy<Value = LabelSet> {
    btree_set(0..max, 0..=7).prop_map(|s| s.into_iter().collect())
}

fn records(n: usize) -> Vec<JobRecord> {
    (0..n)
        .map(|i| JobRecord::new(format!("r{i}"), format!("mô tả {i}"), LabelSet::from([i % 68])).unwrap())
        .collect()
}

proptest! {
    #[test]
    fn clean_text_is_idempotent(s in "\\PC{0,60}") {
        let once = clean_text(&s);
        prop_assert_eq!(clean_text(&once), once.clone());
        prop_assert!(!once.starts_with(' ') && !once.ends_with(' ') && !once.contains("  "));
    }

    #[test]
    fn encode_pads_to_max_len(words in vec("[a-z]{1,6}", 0..40), max_len in 1usize..30) {
        let vocab = build_vocab(std::slice::from_ref(&words), 1).unwrap();
        let enc = encode(&words, &vocab, max_len);
        prop_assert_eq!(enc.indices.len(), max_len);
        prop_assert_eq!(enc.true_length, words.len().min(max_len));
        prop_assert!(enc.indices[enc.true_length..].iter().all(|&i| i == PAD));
        prop_assert_eq!(decode(&enc, &vocab), words[..enc.true_length].to_vec());
    }

    #[test]
    fn vocabulary_text_round_trip(words in vec("[a-zà-ỹ_]{1,8}", 1..60), min_freq in 1usize..3) {
        let vocab = build_vocab(&[words], min_freq).unwrap();
        let back = Vocabulary::read(vocab.to_text().as_bytes(), "mem").unwrap();
        prop_assert_eq!(back, vocab);
    }

    #[test]
    fn split_partitions_both_pools(n_train in 1usize..300, n_test in 0usize..100, frac in 0.01f64..0.99, seed: u64) {
        let all = records(n_train + n_test);
        let (train, test) = (all[..n_train].to_vec(), all[n_train..].to_vec());
        let s = split_corpus(train, test, frac, seed).unwrap();
        prop_assert_eq!(s.train.len() + s.dev.len() + s.test.len(), n_train + n_test);
        prop_assert_eq!(s.dev.len(), dev_count(n_train, frac) + dev_count(n_test, frac));
        let mut ids: Vec<&str> = s.train.iter().chain(&s.dev).chain(&s.test).map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), n_train + n_test);
    }

    #[test]
    fn stats_histogram_covers_every_record(sets in vec(label_set(68), 1..80)) {
        let recs: Vec<JobRecord> = sets
            .into_iter()
            .enumerate()
            .map(|(i, l)| JobRecord::new(format!("r{i}"), "x".repeat(i % 7 + 1), l).unwrap())
            .collect();
        let st = compute_stats(&recs).unwrap();
        prop_assert_eq!(st.label_cardinality_histogram.values().sum::<usize>(), recs.len());
        prop_assert_eq!(st.single_label_count + st.multi_label_count, recs.len());
        prop_assert_eq!(st.per_language_counts.values().sum::<usize>(), recs.len());
    }

    #[test]
    fn f1_bounds_and_symmetry(t in label_set(68), p in label_set(68)) {
        let ab = example_f1(&LabelSetPair::new(t.clone(), p.clone())).unwrap();
        let ba = example_f1(&LabelSetPair::new(p, t)).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn mean_f1_ignores_order(pairs in vec((label_set(68), maybe_empty_set(68)), 1..40), rot in 0usize..40) {
        let pairs: Vec<LabelSetPair> = pairs.into_iter().map(|(t, p)| LabelSetPair::new(t, p)).collect();
        let mut rotated = pairs.clone();
        rotated.rotate_left(rot % pairs.len());
        rotated.reverse();
        let (a, b) = (mean_f1(&pairs).unwrap(), mean_f1(&rotated).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
        for mode in [MatchMode::Exact, MatchMode::Partial] {
            let total: usize = exact_match_table(&pairs, mode).values().map(|b| b.total()).sum();
            prop_assert_eq!(total, pairs.len());
        }
    }

    #[test]
    fn threshold_is_monotone(probs in vec(0.0f64..1.0, 1..68), t1 in 0.01f64..0.99, t2 in 0.01f64..0.99) {
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let wide = predict_labels(&probs, lo);
        let narrow = predict_labels(&probs, hi);
        prop_assert!(narrow.iter().all(|l| wide.contains(l)));
    }

    #[test]
    fn vector_text_is_bit_exact(rows in vec(vec(-1e3f32..1e3, 5), 1..20)) {
        let mut text = format!("{} 5\n", rows.len());
        for (i, r) in rows.iter().enumerate() {
            text.push_str(&format!("w{i}"));
            for v in r {
                text.push_str(&format!(" {v}"));
            }
            text.push('\n');
        }
        let parsed = read_vectors::<f32>(text.as_bytes(), "mem", None).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let got = parsed.get(&format!("w{i}")).unwrap();
            prop_assert_eq!(got.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), r.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn catalog_text_round_trip(titles in btree_set("[A-Za-z][A-Za-z /]{0,20}[a-z]", 1..20)) {
        let titles: Vec<String> = titles.into_iter().collect();
        let folded: std::collections::HashSet<String> = titles.iter().map(|t| jtpred::corpus::fold_title(t)).collect();
        prop_assume!(folded.len() == titles.len());
        let cat = LabelCatalog::from_titles(titles).unwrap();
        prop_assert_eq!(LabelCatalog::parse(&cat.to_text(), "mem").unwrap(), cat);
    }

    #[test]
    fn model_config_json_round_trip(epochs in 1usize..50, lr in 1e-5f64..1.0, seed: u64, thr in 0.01f64..0.99) {
        let c = ModelConfig { epochs, learning_rate: lr, seed, threshold: thr, ..ModelConfig::default() };
        let back: ModelConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }
}

fn config_strategy() -> impl Strategy<Value = ModelConfig> {
    (
        2usize..40,
        1usize..10,
        (1usize..12, 1usize..8, 1usize..8, 1usize..6),
        vec(1usize..6, 1..4),
        1usize..70,
        any::<u64>(),
    )
        .prop_map(|(vocab, dim, (extra, gru, lstm, filters), kernels, labels, seed)| {
            let widest = *kernels.iter().max().unwrap();
            ModelConfig {
                vocab_size: vocab,
                embed_dim: dim,
                max_len: widest + extra,
                gru_units: gru,
                lstm_units: lstm,
                conv_filters: filters,
                conv_kernel_widths: kernels,
                num_labels: labels,
                seed,
                ..ModelConfig::default()
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn shape_audit_holds_for_random_configs(config in config_strategy()) {
        let emb = Tensor::<f32>::zeros(&[config.vocab_size, config.embed_dim]);
        let params = ModelParams::init(&config, emb, config.seed).unwrap();
        params.audit(&config).unwrap();
        let shapes: BTreeMap<String, Vec<usize>> = expected_shapes(&config).into_iter().collect();
        prop_assert_eq!(&shapes["gru.fwd.w_z"], &vec![config.embed_dim, config.gru_units]);
        prop_assert_eq!(&shapes["lstm.bwd.u_c"], &vec![config.lstm_units, config.lstm_units]);
        prop_assert_eq!(&shapes["dense.w"], &vec![config.feature_width(), config.num_labels]);
        let total: usize = shapes.values().map(|s| s.iter().product::<usize>()).sum();
        prop_assert_eq!(params.parameter_count(), total);
    }
}

#[test]
fn tokenize_splits_on_single_spaces() {
    assert_eq!(tokenize("kế_toán  tổng hợp"), vec!["kế_toán", "tổng", "hợp"]);
}
