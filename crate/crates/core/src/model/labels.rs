use std::collections::BTreeMap;

use super::params::check_simplex;
use super::votes::ObjectId;
use crate::error::{Error, Result};
use crate::math::argmax;

/// Hard class assignment `z` for a set of objects.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelAssignment {
    labels: BTreeMap<ObjectId, usize>,
}

impl LabelAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, object: ObjectId, class: usize) {
        self.labels.insert(object, class);
    }

    pub fn get(&self, object: &ObjectId) -> Option<usize> {
        self.labels.get(object).copied()
    }

    pub fn contains(&self, object: &ObjectId) -> bool {
        self.labels.contains_key(object)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ObjectId, usize)> {
        self.labels.iter().map(|(o, c)| (o, *c))
    }

    pub fn objects(&self) -> impl Iterator<Item = &ObjectId> {
        self.labels.keys()
    }

    /// Fails when any label is not a valid class index.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().find(|(_, c)| **c >= num_classes) {
            Some((o, c)) => Err(Error::invalid(format!(
                "object {o} assigned class index {c} but only {num_classes} classes exist"
            ))),
            None => Ok(()),
        }
    }

    /// Assignment restricted to objects accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&ObjectId) -> bool) -> Self {
        Self {
            labels: self
                .labels
                .iter()
                .filter(|(o, _)| keep(o))
                .map(|(o, c)| (o.clone(), *c))
                .collect(),
        }
    }

    /// Number of objects per class.
    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for c in self.labels.values() {
            counts[*c] += 1;
        }
        counts
    }
}

impl FromIterator<(ObjectId, usize)> for LabelAssignment {
    fn from_iter<T: IntoIterator<Item = (ObjectId, usize)>>(iter: T) -> Self {
        Self {
            labels: iter.into_iter().collect(),
        }
    }
}

/// Per-object probability vectors over the K classes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelPosterior {
    probs: BTreeMap<ObjectId, Vec<f64>>,
}

impl LabelPosterior {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, object: ObjectId, probs: Vec<f64>) -> Result<()> {
        check_simplex(&probs)?;
        self.probs.insert(object, probs);
        Ok(())
    }

    pub fn get(&self, object: &ObjectId) -> Option<&[f64]> {
        self.probs.get(object).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ObjectId, &[f64])> {
        self.probs.iter().map(|(o, p)| (o, p.as_slice()))
    }

    /// Maximum a-posteriori class per object (ties to the lowest index).
    pub fn argmax(&self) -> LabelAssignment {
        self.probs
            .iter()
            .map(|(o, p)| (o.clone(), argmax(p)))
            .collect()
    }
}
