//! Binary checkpoint: an 8-byte magic, a `u32` format version, a `u64` header
//! length, a JSON header and then every tensor as little-endian scalars.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::corpus::LabelCatalog;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use crate::textpipe::Vocabulary;

pub const MAGIC: &[u8; 8] = b"JTPCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub config: ModelConfig,
    pub params: ModelParams<T>,
    pub vocab: Vocabulary,
    pub catalog: LabelCatalog,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dtype: String,
    config: ModelConfig,
    vocab: VocabHeader,
    catalog: CatalogHeader,
    tensors: Vec<TensorHeader>,
    data_bytes: u64,
}

#[derive(Serialize, Deserialize)]
struct VocabHeader {
    min_freq: usize,
    tokens: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CatalogHeader {
    titles: Vec<String>,
    aliases: Vec<(String, usize)>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

impl<T: Real> Checkpoint<T> {
    pub fn new(config: ModelConfig, params: ModelParams<T>, vocab: Vocabulary, catalog: LabelCatalog) -> Result<Self> {
        let ckpt = Checkpoint {
            config,
            params,
            vocab,
            catalog,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.params.audit(&self.config)?;
        if self.vocab.len() != self.config.vocab_size {
            return Err(Error::validation(format!(
                "vocabulary has {} entries but the config says {}",
                self.vocab.len(),
                self.config.vocab_size
            )));
        }
        if self.catalog.len() != self.config.num_labels {
            return Err(Error::validation(format!(
                "catalog has {} titles but the config says {}",
                self.catalog.len(),
                self.config.num_labels
            )));
        }
        Ok(())
    }

    /// Errors unless `runtime` lists the same titles in the same order.
    pub fn check_catalog(&self, runtime: &LabelCatalog) -> Result<()> {
        if self.catalog.titles() != runtime.titles() {
            return Err(Error::validation(format!(
                "checkpoint catalog ({} titles) differs from the runtime catalog ({} titles)",
                self.catalog.len(),
                runtime.len()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let named = self.params.named_tensors();
        let data_bytes: usize = named.iter().map(|(_, t)| t.len() * T::BYTES).sum();
        let header = Header {
            format_version: FORMAT_VERSION,
            dtype: T::DTYPE.to_string(),
            config: self.config.clone(),
            vocab: VocabHeader {
                min_freq: self.vocab.min_freq(),
                tokens: self.vocab.tokens().to_vec(),
            },
            catalog: CatalogHeader {
                titles: self.catalog.titles().to_vec(),
                aliases: self.catalog.aliases().iter().map(|(k, &v)| (k.clone(), v)).collect(),
            },
            tensors: named
                .iter()
                .map(|(n, t)| TensorHeader {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
            data_bytes: data_bytes as u64,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + 4 + 8 + json.len() + data_bytes);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in named {
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let truncated = |what: &str| Error::parse(origin, 0, format!("truncated checkpoint ({what})"));
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(Error::parse(origin, 0, "not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(
            bytes
                .get(8..12)
                .ok_or_else(|| truncated("version"))?
                .try_into()
                .expect("4"),
        );
        if version != FORMAT_VERSION {
            return Err(Error::IncompatibleCheckpoint(format!(
                "format version {version}, this build reads version {FORMAT_VERSION}"
            )));
        }
        let header_len = u64::from_le_bytes(
            bytes
                .get(12..20)
                .ok_or_else(|| truncated("header length"))?
                .try_into()
                .expect("8"),
        );
        let header_end = 20usize
            .checked_add(usize::try_from(header_len).map_err(|_| truncated("header length"))?)
            .ok_or_else(|| truncated("header length"))?;
        let header_bytes = bytes.get(20..header_end).ok_or_else(|| truncated("header"))?;
        let header: Header = serde_json::from_slice(header_bytes)
            .map_err(|e| Error::parse(origin, 0, format!("bad checkpoint header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::IncompatibleCheckpoint(format!(
                "header format version {}, expected {FORMAT_VERSION}",
                header.format_version
            )));
        }
        if header.dtype != T::DTYPE {
            return Err(Error::IncompatibleCheckpoint(format!(
                "checkpoint holds {} tensors, requested {}",
                header.dtype,
                T::DTYPE
            )));
        }
        let data = &bytes[header_end..];
        if data.len() as u64 != header.data_bytes {
            return Err(Error::parse(
                origin,
                0,
                format!(
                    "checkpoint data is {} bytes, header says {}",
                    data.len(),
                    header.data_bytes
                ),
            ));
        }

        let mut offset = 0usize;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for th in header.tensors {
            let n: usize = th.shape.iter().product();
            let end = offset + n * T::BYTES;
            let chunk = data.get(offset..end).ok_or_else(|| truncated("tensor data"))?;
            let values: Vec<T> = chunk.chunks_exact(T::BYTES).map(T::read_le).collect();
            tensors.push((th.name, Tensor::new(th.shape, values)?));
            offset = end;
        }
        if offset != data.len() {
            return Err(Error::parse(origin, 0, "trailing bytes after tensor data"));
        }

        let config = header.config;
        config.validate()?;
        let params = ModelParams::from_tensors(&config, tensors)?;
        let vocab = Vocabulary::from_tokens(header.vocab.tokens, header.vocab.min_freq)?;
        let catalog = LabelCatalog::with_aliases(header.catalog.titles, header.catalog.aliases)?;
        Checkpoint::new(config, params, vocab, catalog)
    }

    /// Writes to a sibling temp file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut tmp_name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
        tmp_name.push(".tmp");
        let tmp = path.with_file_name(tmp_name);
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

pub fn save_checkpoint<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    vocab: &Vocabulary,
    catalog: &LabelCatalog,
    path: &Path,
) -> Result<()> {
    Checkpoint::new(config.clone(), params.clone(), vocab.clone(), catalog.clone())?.save(path)
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    Checkpoint::load(path)
}
