use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

id_type!(
    /// Identifier of a labeler (a human or a simulated voter).
    LabelerId
);
id_type!(
    /// Identifier of an object to be classified.
    ObjectId
);

/// Two-bit response encoding: `[1,0]` yes, `[0,1]` no, `[0,0]` not asked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ResponsePair {
    yes: u8,
    no: u8,
}

impl ResponsePair {
    pub const YES: Self = Self { yes: 1, no: 0 };
    pub const NO: Self = Self { yes: 0, no: 1 };
    pub const UNASKED: Self = Self { yes: 0, no: 0 };

    pub fn new(yes_bit: u8, no_bit: u8) -> Result<Self> {
        if yes_bit > 1 || no_bit > 1 || yes_bit + no_bit > 1 {
            return Err(Error::invalid(format!(
                "response pair [{yes_bit},{no_bit}] is not one of [1,0], [0,1], [0,0]"
            )));
        }
        Ok(Self {
            yes: yes_bit,
            no: no_bit,
        })
    }

    pub fn from_answer(yes: bool) -> Self {
        if yes {
            Self::YES
        } else {
            Self::NO
        }
    }

    pub fn yes_bit(self) -> u8 {
        self.yes
    }

    pub fn no_bit(self) -> u8 {
        self.no
    }

    pub fn is_asked(self) -> bool {
        self.yes + self.no == 1
    }

    pub fn is_yes(self) -> bool {
        self.yes == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    /// Binary "does this object belong to class k?" question.
    Yn,
    /// Full question: pick one of the K classes.
    Full,
}

/// All recorded responses of a campaign.
///
/// Yes/no answers are keyed by `(labeler, object, asked class)`; unasked
/// cells are absent. Full-question answers are keyed by `(labeler, object)`
/// and store the chosen class. Iteration is always in sorted key order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteTable {
    num_classes: usize,
    yn: BTreeMap<(LabelerId, ObjectId, usize), ResponsePair>,
    full: BTreeMap<(LabelerId, ObjectId), usize>,
}

impl VoteTable {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            yn: BTreeMap::new(),
            full: BTreeMap::new(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Records a yes/no answer. A labeler is never asked the same class twice
    /// for the same object, so a repeated key is rejected.
    pub fn insert_yn(
        &mut self,
        labeler: LabelerId,
        object: ObjectId,
        class: usize,
        response: ResponsePair,
    ) -> Result<()> {
        self.check_class(class)?;
        if !response.is_asked() {
            return Err(Error::invalid(
                "unasked [0,0] responses are implicit and cannot be inserted",
            ));
        }
        let key = (labeler, object, class);
        if self.yn.contains_key(&key) {
            return Err(Error::invalid(format!(
                "duplicate yes/no vote for labeler {}, object {}, class {}",
                key.0, key.1, key.2
            )));
        }
        self.yn.insert(key, response);
        Ok(())
    }

    /// Records a full-question answer (at most one per labeler and object).
    pub fn insert_full(&mut self, labeler: LabelerId, object: ObjectId, chosen: usize) -> Result<()> {
        self.check_class(chosen)?;
        let key = (labeler, object);
        if self.full.contains_key(&key) {
            return Err(Error::invalid(format!(
                "duplicate full vote for labeler {}, object {}",
                key.0, key.1
            )));
        }
        self.full.insert(key, chosen);
        Ok(())
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.num_classes {
            return Err(Error::invalid(format!(
                "class index {class} out of range for {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Response for a cell; `[0,0]` when the question was not asked.
    pub fn response(&self, labeler: &LabelerId, object: &ObjectId, class: usize) -> ResponsePair {
        // BTreeMap lookups need an owned key tuple.
        self.yn
            .get(&(labeler.clone(), object.clone(), class))
            .copied()
            .unwrap_or(ResponsePair::UNASKED)
    }

    pub fn yn_votes(&self) -> impl Iterator<Item = (&LabelerId, &ObjectId, usize, ResponsePair)> {
        self.yn.iter().map(|((j, i, k), r)| (j, i, *k, *r))
    }

    pub fn full_votes(&self) -> impl Iterator<Item = (&LabelerId, &ObjectId, usize)> {
        self.full.iter().map(|((j, i), c)| (j, i, *c))
    }

    pub fn yn_len(&self) -> usize {
        self.yn.len()
    }

    pub fn full_len(&self) -> usize {
        self.full.len()
    }

    pub fn is_empty(&self) -> bool {
        self.yn.is_empty() && self.full.is_empty()
    }

    /// The set `K_i^j` of classes asked to `labeler` about `object`.
    pub fn asked_classes(&self, labeler: &LabelerId, object: &ObjectId) -> Vec<usize> {
        self.yn_votes()
            .filter(|(j, i, _, _)| *j == labeler && *i == object)
            .map(|(_, _, k, _)| k)
            .collect()
    }

    pub fn labelers(&self) -> BTreeSet<LabelerId> {
        self.yn
            .keys()
            .map(|(j, _, _)| j.clone())
            .chain(self.full.keys().map(|(j, _)| j.clone()))
            .collect()
    }

    pub fn objects(&self) -> BTreeSet<ObjectId> {
        self.yn
            .keys()
            .map(|(_, i, _)| i.clone())
            .chain(self.full.keys().map(|(_, i)| i.clone()))
            .collect()
    }

    pub fn yn_objects(&self) -> BTreeSet<ObjectId> {
        self.yn.keys().map(|(_, i, _)| i.clone()).collect()
    }

    /// Splits the table by a predicate on the object id: `(matching, rest)`.
    pub fn partition_by_object(&self, mut pred: impl FnMut(&ObjectId) -> bool) -> (Self, Self) {
        let mut a = Self::new(self.num_classes);
        let mut b = Self::new(self.num_classes);
        for (key, r) in &self.yn {
            let dst = if pred(&key.1) { &mut a } else { &mut b };
            dst.yn.insert(key.clone(), *r);
        }
        for (key, c) in &self.full {
            let dst = if pred(&key.1) { &mut a } else { &mut b };
            dst.full.insert(key.clone(), *c);
        }
        (a, b)
    }

    /// Copy keeping only yes/no entries.
    pub fn yn_only(&self) -> Self {
        Self {
            num_classes: self.num_classes,
            yn: self.yn.clone(),
            full: BTreeMap::new(),
        }
    }

    /// Copy keeping only full-question entries.
    pub fn full_only(&self) -> Self {
        Self {
            num_classes: self.num_classes,
            yn: BTreeMap::new(),
            full: self.full.clone(),
        }
    }

    /// Merges `other` into `self`, rejecting any duplicate key.
    pub fn merge(&mut self, other: &VoteTable) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::consistency("cannot merge vote tables with different K"));
        }
        for (j, i, k, r) in other.yn_votes() {
            self.insert_yn(j.clone(), i.clone(), k, r)?;
        }
        for (j, i, c) in other.full_votes() {
            self.insert_full(j.clone(), i.clone(), c)?;
        }
        Ok(())
    }
}
