//! Example-based F1, exact-match tables by label cardinality, and misprediction samples.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelCatalog;
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::par;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSetPair {
    pub truth: LabelSet,
    pub predicted: LabelSet,
}

impl LabelSetPair {
    pub fn new(truth: LabelSet, predicted: LabelSet) -> Self {
        LabelSetPair { truth, predicted }
    }

    pub fn is_exact(&self) -> bool {
        self.truth == self.predicted
    }
}

/// `2 |truth ∩ predicted| / (|truth| + |predicted|)`.
pub fn example_f1(pair: &LabelSetPair) -> Result<f64> {
    if pair.truth.is_empty() {
        return Err(Error::validation("example F1 needs at least one true label"));
    }
    let inter = pair.truth.intersection_len(&pair.predicted);
    Ok(2.0 * inter as f64 / (pair.truth.len() + pair.predicted.len()) as f64)
}

/// Unweighted mean of [`example_f1`]. Per-pair scores may be computed in
/// parallel; the sum is always taken in input order.
pub fn mean_f1(pairs: &[LabelSetPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::validation("mean F1 over zero pairs"));
    }
    let scores = par::map_ordered(pairs, example_f1)
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    Ok(scores.iter().sum::<f64>() / pairs.len() as f64)
}

/// How a pair counts as correct in [`exact_match_table`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Predicted set equals the true set.
    #[default]
    Exact,
    /// At least one true label was predicted.
    Partial,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub corrects: usize,
    pub wrongs: usize,
}

impl Bucket {
    pub fn total(&self) -> usize {
        self.corrects + self.wrongs
    }
}

/// Correct/wrong counts grouped by the number of true labels.
pub fn exact_match_table(pairs: &[LabelSetPair], mode: MatchMode) -> BTreeMap<usize, Bucket> {
    let mut table: BTreeMap<usize, Bucket> = BTreeMap::new();
    for p in pairs {
        let correct = match mode {
            MatchMode::Exact => p.is_exact(),
            MatchMode::Partial => p.truth.intersection_len(&p.predicted) > 0,
        };
        let b = table.entry(p.truth.len()).or_default();
        if correct {
            b.corrects += 1;
        } else {
            b.wrongs += 1;
        }
    }
    table
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Misprediction {
    pub id: String,
    pub truth: Vec<String>,
    pub predicted: Vec<String>,
}

/// The first `limit` pairs, in input order, whose prediction differs from the truth.
pub fn misprediction_samples(
    pairs: &[(String, LabelSetPair)],
    catalog: &LabelCatalog,
    limit: usize,
) -> Vec<Misprediction> {
    pairs
        .iter()
        .filter(|(_, p)| !p.is_exact())
        .take(limit)
        .map(|(id, p)| Misprediction {
            id: id.clone(),
            truth: catalog.names(&p.truth),
            predicted: catalog.names(&p.predicted),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_f1: f64,
    /// `mean_f1` as a percentage with two decimals, e.g. `"62.20"`.
    pub mean_f1_percent: String,
    pub n: usize,
    pub match_mode: MatchMode,
    pub per_cardinality: BTreeMap<usize, Bucket>,
    pub samples: Vec<Misprediction>,
}

pub fn format_percent(f1: f64) -> String {
    format!("{:.2}", f1 * 100.0)
}

pub fn evaluate(
    pairs: &[(String, LabelSetPair)],
    catalog: &LabelCatalog,
    mode: MatchMode,
    sample_limit: usize,
) -> Result<EvalReport> {
    let plain: Vec<LabelSetPair> = pairs.iter().map(|(_, p)| p.clone()).collect();
    let mean = mean_f1(&plain)?;
    Ok(EvalReport {
        mean_f1: mean,
        mean_f1_percent: format_percent(mean),
        n: plain.len(),
        match_mode: mode,
        per_cardinality: exact_match_table(&plain, mode),
        samples: misprediction_samples(pairs, catalog, sample_limit),
    })
}

impl EvalReport {
    /// Plain-text table of correct and wrong predictions per label count.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mean example-F1: {}%  (n = {})", self.mean_f1_percent, self.n);
        let _ = writeln!(
            out,
            "{:>16} | {:>10} | {:>10}",
            "Number of titles", "# Corrects", "# Wrongs"
        );
        let _ = writeln!(out, "{}", "-".repeat(42));
        for (k, b) in &self.per_cardinality {
            let _ = writeln!(out, "{:>16} | {:>10} | {:>10}", k, b.corrects, b.wrongs);
        }
        out
    }

    pub fn render_samples(&self) -> String {
        render_samples(&self.samples)
    }
}

pub fn render_samples(samples: &[Misprediction]) -> String {
    let mut out = String::new();
    for (i, s) in samples.iter().enumerate() {
        let _ = writeln!(out, "{}. id {}", i + 1, s.id);
        let _ = writeln!(out, "   true:      {}", s.truth.join(", "));
        let pred = if s.predicted.is_empty() {
            "[]".to_string()
        } else {
            s.predicted.join(", ")
        };
        let _ = writeln!(out, "   predicted: {pred}");
    }
    out
}
