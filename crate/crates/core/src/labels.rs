use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Set of catalog indices attached to (or predicted for) one posting.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet(BTreeSet<usize>);

impl LabelSet {
    pub fn new() -> Self {
        LabelSet(BTreeSet::new())
    }

    pub fn insert(&mut self, label: usize) -> bool {
        self.0.insert(label)
    }

    pub fn contains(&self, label: usize) -> bool {
        self.0.contains(&label)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn intersection_len(&self, other: &LabelSet) -> usize {
        self.0.intersection(&other.0).count()
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// Multi-hot encoding of length `num_labels`. Indices beyond it are ignored.
    pub fn to_multi_hot(&self, num_labels: usize) -> Vec<bool> {
        let mut v = vec![false; num_labels];
        for i in self.iter().filter(|&i| i < num_labels) {
            v[i] = true;
        }
        v
    }
}

impl FromIterator<usize> for LabelSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        LabelSet(iter.into_iter().collect())
    }
}

impl<const N: usize> From<[usize; N]> for LabelSet {
    fn from(v: [usize; N]) -> Self {
        v.into_iter().collect()
    }
}
