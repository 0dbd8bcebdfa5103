use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hurdat2::StatusCode;

/// Sorted, de-duplicated class list. Class index order is the two-letter
/// code order, so "lowest index wins" is the lexicographic tie rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet {
    classes: Vec<StatusCode>,
}

impl LabelSet {
    pub fn new(mut classes: Vec<StatusCode>) -> LabelSet {
        classes.sort();
        classes.dedup();
        LabelSet { classes }
    }

    pub fn from_labels<'a, I: IntoIterator<Item = &'a StatusCode>>(labels: I) -> LabelSet {
        LabelSet::new(labels.into_iter().cloned().collect())
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[StatusCode] {
        &self.classes
    }

    pub fn get(&self, index: usize) -> &StatusCode {
        &self.classes[index]
    }

    pub fn index_of(&self, label: &StatusCode) -> Option<usize> {
        self.classes.binary_search(label).ok()
    }

    pub fn encode(&self, labels: &[StatusCode]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.index_of(l)
                    .ok_or_else(|| Error::UnknownClass(l.to_string()))
            })
            .collect()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
