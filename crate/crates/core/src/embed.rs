//! Pretrained static word vectors in the word2vec text format, and the
//! vocabulary-aligned matrix that initializes the embedding layer.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use crate::textpipe::{Vocabulary, PAD, UNK};

/// Half-width of the uniform range used for tokens missing from the pretrained file.
pub const OOV_INIT_RANGE: f64 = 0.25;

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainedVectors<T> {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<T>>,
    pub source_name: String,
}

impl<T: Real> PretrainedVectors<T> {
    pub fn empty(dim: usize, source_name: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("embedding dimension must be positive"));
        }
        Ok(PretrainedVectors {
            dim,
            vectors: HashMap::new(),
            source_name: source_name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[T]> {
        self.vectors.get(token).map(Vec::as_slice)
    }
}

pub fn load_vectors<T: Real>(path: &Path) -> Result<PretrainedVectors<T>> {
    load_vectors_filtered(path, None)
}

/// Like [`load_vectors`] but keeps only tokens present in `vocab`.
///
/// Every row is still parsed and validated; filtering only bounds memory for
/// large files.
pub fn load_vectors_filtered<T: Real>(path: &Path, vocab: Option<&Vocabulary>) -> Result<PretrainedVectors<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    read_vectors(BufReader::new(file), &name, vocab)
}

/// Parses `[count dim]` followed by `token v1 ... vd` rows.
///
/// The dimension comes from the header when present, else from the first row.
/// Repeated tokens keep their first vector.
pub fn read_vectors<T: Real>(
    reader: impl BufRead,
    origin: &str,
    vocab: Option<&Vocabulary>,
) -> Result<PretrainedVectors<T>> {
    let mut dim: Option<usize> = None;
    let mut declared_rows: Option<usize> = None;
    let mut rows = 0usize;
    let mut vectors = HashMap::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_ascii_whitespace();
        let token = fields.next().expect("non-empty line");

        if lineno == 1 {
            let rest: Vec<&str> = fields.clone().collect();
            if rest.len() == 1 {
                if let (Ok(count), Ok(d)) = (token.parse::<usize>(), rest[0].parse::<usize>()) {
                    if d == 0 {
                        return Err(Error::parse(origin, lineno, "header declares dimension 0"));
                    }
                    dim = Some(d);
                    declared_rows = Some(count);
                    continue;
                }
            }
        }

        let values = fields
            .map(|f| {
                f.parse::<T>()
                    .map_err(|_| Error::parse(origin, lineno, format!("non-numeric component {f:?}")))
            })
            .collect::<Result<Vec<T>>>()?;
        let expected = *dim.get_or_insert(values.len());
        if expected == 0 {
            return Err(Error::parse(
                origin,
                lineno,
                format!("token {token:?} has no components"),
            ));
        }
        if values.len() != expected {
            return Err(Error::parse(
                origin,
                lineno,
                format!("expected {expected} components, found {}", values.len()),
            ));
        }
        rows += 1;
        if vocab.is_some_and(|v| v.index(token).is_none()) {
            continue;
        }
        vectors.entry(token.to_string()).or_insert(values);
    }

    let dim = dim.ok_or_else(|| Error::parse(origin, 1, "vector file has no rows"))?;
    if let Some(n) = declared_rows {
        if n != rows {
            return Err(Error::parse(
                origin,
                1,
                format!("header declares {n} vectors, file has {rows}"),
            ));
        }
    }
    Ok(PretrainedVectors {
        dim,
        vectors,
        source_name: origin.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<T> {
    pub matrix: Tensor<T>,
    pub dim: usize,
    pub trainable: bool,
    pub oov_count: usize,
}

/// Vocabulary-aligned embedding matrix.
///
/// Rows for tokens in `pretrained` copy the file vector. UNK and every other
/// missing token draw i.i.d. from U(-0.25, 0.25) in index order with a
/// ChaCha8 stream seeded by `seed`. The PAD row is zero.
pub fn build_embedding_matrix<T: Real>(
    vocab: &Vocabulary,
    pretrained: &PretrainedVectors<T>,
    seed: u64,
) -> Result<EmbeddingTable<T>> {
    if vocab.is_empty() {
        return Err(Error::validation("vocabulary is empty"));
    }
    let dim = pretrained.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(vocab.len() * dim);
    let mut oov = 0;
    for (i, token) in vocab.tokens().iter().enumerate() {
        let i = i as u32;
        if i == PAD {
            data.extend(std::iter::repeat_n(T::zero(), dim));
            continue;
        }
        match pretrained.get(token).filter(|_| i != UNK) {
            Some(v) => data.extend_from_slice(v),
            None => {
                oov += 1;
                data.extend((0..dim).map(|_| T::lit(rng.gen_range(-OOV_INIT_RANGE..=OOV_INIT_RANGE))));
            }
        }
    }
    Ok(EmbeddingTable {
        matrix: Tensor::new(vec![vocab.len(), dim], data)?,
        dim,
        trainable: true,
        oov_count: oov,
    })
}
