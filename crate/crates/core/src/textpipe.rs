//! Text cleaning, whitespace tokenization, vocabulary building and fixed-length encoding.
//!
//! Input is expected to be word-segmented upstream, with Vietnamese compounds
//! joined by underscores (`khách_hàng`). Underscores survive cleaning so a
//! compound stays a single token.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Default minimum token frequency for [`build_vocab`].
pub const DEFAULT_MIN_FREQ: usize = 2;

fn is_combining_mark(c: char) -> bool {
    // NFD-encoded Vietnamese puts its tone marks here
    matches!(c, '\u{0300}'..='\u{036F}')
}

fn keep(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || is_combining_mark(c)
}

/// Lowercases, replaces every character outside letters/digits/underscore by a
/// space, collapses runs of spaces and trims.
pub fn clean_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars().flat_map(char::to_lowercase) {
        if keep(c) {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    out
}

pub fn tokenize(cleaned: &str) -> Vec<&str> {
    cleaned.split(' ').filter(|t| !t.is_empty()).collect()
}

/// `tokenize(clean_text(raw))` with owned tokens.
pub fn preprocess(raw: &str) -> Vec<String> {
    tokenize(&clean_text(raw)).into_iter().map(str::to_string).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    index_to_token: Vec<String>,
    token_to_index: HashMap<String, u32>,
    min_freq: usize,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its tokens in index order. Slots 0 and 1 must be PAD and UNK.
    pub fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(Error::validation("vocabulary must start with <pad> and <unk>"));
        }
        let mut token_to_index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(['\t', '\n']) {
                return Err(Error::validation(format!("invalid vocabulary token {t:?}")));
            }
            if token_to_index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::validation(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary {
            index_to_token: tokens,
            token_to_index,
            min_freq,
        })
    }

    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_to_token.is_empty()
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn index(&self, token: &str) -> Option<u32> {
        self.token_to_index.get(token).copied()
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.index_to_token.get(index as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.index_to_token
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Header `min_freq=<n>\tsize=<n>`, then one `token<TAB>index` per line.
    pub fn to_text(&self) -> String {
        let mut out = Vec::new();
        writeln!(out, "min_freq={}\tsize={}", self.min_freq, self.len()).expect("write to vec");
        for (i, t) in self.index_to_token.iter().enumerate() {
            writeln!(out, "{t}\t{i}").expect("write to vec");
        }
        String::from_utf8(out).expect("utf-8")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string())
    }

    pub fn read(reader: impl BufRead, origin: &str) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 1, "missing vocabulary header"))?
            .map_err(|e| Error::parse(origin, 1, e.to_string()))?;
        let (min_freq, size) = parse_header(&header)
            .ok_or_else(|| Error::parse(origin, 1, format!("bad vocabulary header {header:?}")))?;
        let mut tokens = Vec::with_capacity(size);
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let (tok, idx) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(origin, lineno, "expected token<TAB>index"))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::parse(origin, lineno, format!("bad index {idx:?}")))?;
            if idx != tokens.len() {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("index {idx} out of sequence, expected {}", tokens.len()),
                ));
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() != size {
            return Err(Error::parse(
                origin,
                size + 2,
                format!("header declares {size} tokens, found {}", tokens.len()),
            ));
        }
        Self::from_tokens(tokens, min_freq)
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let (a, b) = line.split_once('\t')?;
    let min_freq = a.strip_prefix("min_freq=")?.parse().ok()?;
    let size = b.strip_prefix("size=")?.parse().ok()?;
    Some((min_freq, size))
}

/// Tokens with frequency `>= min_freq` get indices from 2 in descending
/// frequency order, ties broken lexicographically.
pub fn build_vocab<S: AsRef<str>>(corpora: &[Vec<S>], min_freq: usize) -> Result<Vocabulary> {
    if min_freq == 0 {
        return Err(Error::validation("min_freq must be at least 1"));
    }
    if corpora.is_empty() {
        return Err(Error::validation("cannot build a vocabulary from an empty corpus"));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in corpora {
        for tok in doc {
            *counts.entry(tok.as_ref()).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_freq && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tokens = [PAD_TOKEN, UNK_TOKEN]
        .into_iter()
        .chain(kept.into_iter().map(|(t, _)| t))
        .map(str::to_string)
        .collect();
    Vocabulary::from_tokens(tokens, min_freq)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSequence {
    pub indices: Vec<u32>,
    pub true_length: usize,
}

impl EncodedSequence {
    pub fn max_len(&self) -> usize {
        self.indices.len()
    }
}

/// Maps tokens to indices (OOV to UNK), keeps the first `max_len` and right-pads with PAD.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, max_len: usize) -> EncodedSequence {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mut indices: Vec<u32> = tokens
        .iter()
        .take(max_len)
        .map(|t| vocab.index(t.as_ref()).unwrap_or(UNK))
        .collect();
    let true_length = indices.len();
    indices.resize(max_len, PAD);
    EncodedSequence { indices, true_length }
}

/// Inverse of [`encode`] over the unpadded prefix.
pub fn decode(seq: &EncodedSequence, vocab: &Vocabulary) -> Vec<String> {
    seq.indices[..seq.true_length]
        .iter()
        .map(|&i| vocab.token(i).unwrap_or(UNK_TOKEN).to_string())
        .collect()
}

/// Raw description straight to an encoded sequence.
pub fn encode_text(raw: &str, vocab: &Vocabulary, max_len: usize) -> EncodedSequence {
    encode(&tokenize(&clean_text(raw)), vocab, max_len)
}
