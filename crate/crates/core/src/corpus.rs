//! Job-description corpus: the label catalog, JSONL ingestion, dev splitting and summary statistics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSet;

const BUILTIN_TITLES: &str = include_str!("../data/job_titles.txt");

/// Number of canonical titles in the builtin catalog.
pub const BUILTIN_LABEL_COUNT: usize = 68;

/// Case-folds and collapses runs of whitespace, the key used for title matching.
pub fn fold_title(raw: &str) -> String {
    raw.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Ordered list of canonical job titles. Position `i` is one-hot slot `i`.
#[derive(Clone, Debug)]
pub struct LabelCatalog {
    titles: Vec<String>,
    aliases: BTreeMap<String, usize>,
    lookup: HashMap<String, usize>,
}

impl PartialEq for LabelCatalog {
    fn eq(&self, other: &Self) -> bool {
        self.titles == other.titles && self.aliases == other.aliases
    }
}

impl Eq for LabelCatalog {}

/// Where to read a catalog from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CatalogSource<'a> {
    Builtin,
    File(&'a Path),
}

impl<'a> CatalogSource<'a> {
    /// `"builtin"` selects the shipped catalog, anything else is a path.
    pub fn from_arg(arg: &'a str) -> Self {
        if arg == "builtin" {
            CatalogSource::Builtin
        } else {
            CatalogSource::File(Path::new(arg))
        }
    }
}

pub fn load_catalog(source: CatalogSource<'_>) -> Result<LabelCatalog> {
    match source {
        CatalogSource::Builtin => Ok(LabelCatalog::builtin()),
        CatalogSource::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            LabelCatalog::parse(&text, &path.display().to_string())
        }
    }
}

impl LabelCatalog {
    /// The 68 canonical titles with their Vietnamese and English halves as aliases.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TITLES, "<builtin>").expect("builtin catalog is valid")
    }

    /// Parses one title per line, optionally followed by tab-separated aliases.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut titles = Vec::new();
        let mut aliases = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let title = fields.next().unwrap_or_default().trim();
            if title.is_empty() {
                return Err(Error::parse(origin, lineno + 1, "empty canonical title"));
            }
            let idx = titles.len();
            titles.push(title.to_string());
            for alias in fields.map(str::trim).filter(|a| !a.is_empty()) {
                aliases.push((alias.to_string(), idx));
            }
        }
        Self::with_aliases(titles, aliases)
    }

    pub fn from_titles(titles: Vec<String>) -> Result<Self> {
        Self::with_aliases(titles, Vec::new())
    }

    pub fn with_aliases(titles: Vec<String>, aliases: Vec<(String, usize)>) -> Result<Self> {
        if titles.is_empty() {
            return Err(Error::validation("label catalog is empty"));
        }
        let mut lookup = HashMap::new();
        for (i, t) in titles.iter().enumerate() {
            if lookup.insert(fold_title(t), i).is_some() {
                return Err(Error::validation(format!("duplicate canonical title {t:?}")));
            }
        }
        let mut alias_map = BTreeMap::new();
        for (alias, idx) in aliases {
            if idx >= titles.len() {
                return Err(Error::validation(format!(
                    "alias {alias:?} points at index {idx}, catalog has {} titles",
                    titles.len()
                )));
            }
            let key = fold_title(&alias);
            match lookup.get(&key) {
                Some(&existing) if existing != idx => {
                    return Err(Error::validation(format!(
                        "alias {alias:?} is ambiguous between {:?} and {:?}",
                        titles[existing], titles[idx]
                    )));
                }
                Some(_) => {}
                None => {
                    lookup.insert(key, idx);
                }
            }
            alias_map.insert(alias, idx);
        }
        Ok(LabelCatalog {
            titles,
            aliases: alias_map,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.titles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.titles.is_empty()
    }

    pub fn titles(&self) -> &[String] {
        &self.titles
    }

    pub fn title(&self, idx: usize) -> Option<&str> {
        self.titles.get(idx).map(String::as_str)
    }

    pub fn aliases(&self) -> &BTreeMap<String, usize> {
        &self.aliases
    }

    /// Canonical index for a raw title: exact match first, then alias, both after folding.
    pub fn normalize(&self, raw: &str) -> Result<usize> {
        let key = fold_title(raw);
        if key.is_empty() {
            return Err(Error::validation("empty job title"));
        }
        self.lookup
            .get(&key)
            .copied()
            .ok_or_else(|| Error::UnknownTitle(raw.to_string()))
    }

    pub fn names(&self, labels: &LabelSet) -> Vec<String> {
        labels
            .iter()
            .map(|i| self.title(i).map_or_else(|| format!("#{i}"), str::to_string))
            .collect()
    }

    /// Text form accepted by [`LabelCatalog::parse`].
    pub fn to_text(&self) -> String {
        let mut per_title: Vec<Vec<&str>> = vec![Vec::new(); self.titles.len()];
        for (alias, &idx) in &self.aliases {
            per_title[idx].push(alias);
        }
        let mut out = String::new();
        for (title, aliases) in self.titles.iter().zip(per_title) {
            out.push_str(title);
            for a in aliases {
                out.push('\t');
                out.push_str(a);
            }
            out.push('\n');
        }
        out
    }
}

pub fn normalize_title(raw: &str, catalog: &LabelCatalog) -> Result<usize> {
    catalog.normalize(raw)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Vi,
    En,
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::Vi => "vi",
            Language::En => "en",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JobRecord {
    pub id: String,
    pub description: String,
    pub labels: LabelSet,
    pub language: Option<Language>,
}

impl JobRecord {
    pub fn new(id: impl Into<String>, description: impl Into<String>, labels: LabelSet) -> Result<Self> {
        let rec = JobRecord {
            id: id.into(),
            description: description.into(),
            labels,
            language: None,
        };
        rec.validate(None)?;
        Ok(rec)
    }

    pub fn validate(&self, num_labels: Option<usize>) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::validation(format!("record {:?} has no labels", self.id)));
        }
        if self.description.trim().is_empty() {
            return Err(Error::validation(format!(
                "record {:?} has an empty description",
                self.id
            )));
        }
        if let (Some(n), Some(max)) = (num_labels, self.labels.max()) {
            if max >= n {
                return Err(Error::validation(format!(
                    "record {:?} has label {max} outside a catalog of {n}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// What to do with raw labels that match no catalog entry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownLabelPolicy {
    /// Any unknown title aborts loading.
    #[default]
    Abort,
    /// Drop unknown titles with a warning; records left without labels are skipped.
    Skip,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    description: String,
    labels: Vec<String>,
    #[serde(default)]
    language: Option<Language>,
}

/// Reads a JSON-Lines corpus, normalizing every raw title through `catalog`.
pub fn load_corpus(path: &Path, catalog: &LabelCatalog, policy: UnknownLabelPolicy) -> Result<Vec<JobRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), &path.display().to_string(), catalog, policy)
}

pub fn read_corpus(
    reader: impl BufRead,
    origin: &str,
    catalog: &LabelCatalog,
    policy: UnknownLabelPolicy,
) -> Result<Vec<JobRecord>> {
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        if raw.labels.is_empty() {
            return Err(Error::parse(
                origin,
                lineno,
                format!("record {:?} has an empty labels array", raw.id),
            ));
        }
        let mut labels = LabelSet::new();
        for title in &raw.labels {
            match catalog.normalize(title) {
                Ok(idx) => {
                    labels.insert(idx);
                }
                Err(Error::UnknownTitle(t)) if policy == UnknownLabelPolicy::Skip => {
                    log::warn!("{origin}:{lineno}: dropping unknown title {t:?}");
                }
                Err(Error::UnknownTitle(t)) => {
                    return Err(Error::parse(origin, lineno, format!("unknown job title {t:?}")));
                }
                Err(e) => return Err(Error::parse(origin, lineno, e.to_string())),
            }
        }
        if labels.is_empty() {
            log::warn!("{origin}:{lineno}: skipping record {:?}, no resolvable labels", raw.id);
            continue;
        }
        let rec = JobRecord {
            id: raw.id,
            description: raw.description,
            labels,
            language: raw.language,
        };
        rec.validate(Some(catalog.len()))
            .map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        if !ids.insert(rec.id.clone()) {
            return Err(Error::parse(
                origin,
                lineno,
                format!("duplicate record id {:?}", rec.id),
            ));
        }
        records.push(rec);
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<JobRecord>,
    pub dev: Vec<JobRecord>,
    pub test: Vec<JobRecord>,
}

/// Moves `floor(dev_fraction * |pool|)` records from each pool into the dev set.
///
/// Selection is uniform without replacement, driven by ChaCha8 seeded with
/// `seed` on a separate stream per pool. Records keep their input order
/// within every output list; dev lists the train-pool picks first.
pub fn split_corpus(
    train_pool: Vec<JobRecord>,
    test_pool: Vec<JobRecord>,
    dev_fraction: f64,
    seed: u64,
) -> Result<CorpusSplit> {
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(Error::validation(format!(
            "dev fraction must lie in (0, 1), got {dev_fraction}"
        )));
    }
    let train_ids: HashSet<&str> = train_pool.iter().map(|r| r.id.as_str()).collect();
    if let Some(dup) = test_pool.iter().find(|r| train_ids.contains(r.id.as_str())) {
        return Err(Error::validation(format!(
            "record id {:?} appears in both the train and test pools",
            dup.id
        )));
    }

    let (train, mut dev) = take_dev(train_pool, dev_fraction, seed, 0);
    let (test, dev_from_test) = take_dev(test_pool, dev_fraction, seed, 1);
    dev.extend(dev_from_test);
    Ok(CorpusSplit { train, dev, test })
}

/// `floor(fraction * n)`, computed so that e.g. `0.1 * 10` gives 1 rather than 0.
pub fn dev_count(n: usize, fraction: f64) -> usize {
    let raw = fraction * n as f64;
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        raw.floor() as usize
    }
}

fn take_dev(pool: Vec<JobRecord>, fraction: f64, seed: u64, stream: u64) -> (Vec<JobRecord>, Vec<JobRecord>) {
    let k = dev_count(pool.len(), fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut chosen = vec![false; pool.len()];
    for i in index::sample(&mut rng, pool.len(), k) {
        chosen[i] = true;
    }
    let mut keep = Vec::with_capacity(pool.len() - k);
    let mut dev = Vec::with_capacity(k);
    for (rec, pick) in pool.into_iter().zip(chosen) {
        if pick {
            dev.push(rec);
        } else {
            keep.push(rec);
        }
    }
    (keep, dev)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    pub max_char_len: usize,
    /// Mean description length in Unicode scalar values, rounded to 2 decimals.
    pub mean_char_len: f64,
    pub single_label_count: usize,
    pub multi_label_count: usize,
    pub max_labels_per_record: usize,
    pub label_cardinality_histogram: BTreeMap<usize, usize>,
    /// Records without a language tag are counted under `"unknown"`.
    pub per_language_counts: BTreeMap<String, usize>,
}

pub fn compute_stats(records: &[JobRecord]) -> Result<CorpusStats> {
    if records.is_empty() {
        return Err(Error::validation("cannot compute statistics of an empty corpus"));
    }
    let mut max_char_len = 0;
    let mut total_chars = 0usize;
    let mut histogram = BTreeMap::new();
    let mut per_language = BTreeMap::new();
    for r in records {
        let n = r.description.chars().count();
        max_char_len = max_char_len.max(n);
        total_chars += n;
        *histogram.entry(r.labels.len()).or_insert(0) += 1;
        let tag = r.language.map_or_else(|| "unknown".to_string(), |l| l.to_string());
        *per_language.entry(tag).or_insert(0) += 1;
    }
    let single = histogram.get(&1).copied().unwrap_or(0);
    let mean = total_chars as f64 / records.len() as f64;
    Ok(CorpusStats {
        count: records.len(),
        max_char_len,
        mean_char_len: (mean * 100.0).round() / 100.0,
        single_label_count: single,
        multi_label_count: records.len() - single,
        max_labels_per_record: histogram.keys().next_back().copied().unwrap_or(0),
        label_cardinality_histogram: histogram,
        per_language_counts: per_language,
    })
}
