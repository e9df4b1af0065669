//! The shipped toy corpus and a ready-to-train model built from it.

use std::path::{Path, PathBuf};

use jtpred::corpus::{load_catalog, load_corpus, CatalogSource, JobRecord, LabelCatalog, UnknownLabelPolicy};
use jtpred::embed::{build_embedding_matrix, load_vectors};
use jtpred::model::{Dataset, ModelConfig, ModelParams};
use jtpred::pipeline::{encode_records, train_vocab};
use jtpred::textpipe::Vocabulary;

pub fn dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/toy")
}

pub fn catalog() -> LabelCatalog {
    let path = dir().join("catalog.txt");
    load_catalog(CatalogSource::File(&path)).unwrap()
}

pub fn records() -> Vec<JobRecord> {
    load_corpus(&dir().join("train.jsonl"), &catalog(), UnknownLabelPolicy::Abort).unwrap()
}

pub struct Toy {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub data: Dataset,
    pub params: ModelParams<f32>,
    pub catalog: LabelCatalog,
}

/// Toy config over the full 50-record training file, pretrained vectors included.
pub fn toy() -> Toy {
    let catalog = catalog();
    let records = records();
    let vocab = train_vocab(&records, 1).unwrap();
    let vectors = load_vectors::<f32>(&dir().join("vectors.txt")).unwrap();
    let config = ModelConfig::toy(vocab.len(), vectors.dim, catalog.len());
    let table = build_embedding_matrix(&vocab, &vectors, config.seed).unwrap();
    let params = ModelParams::init(&config, table.matrix, config.seed).unwrap();
    let data = encode_records(&records, &vocab, config.max_len);
    Toy {
        config,
        vocab,
        data,
        params,
        catalog,
    }
}
