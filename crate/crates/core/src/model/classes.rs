use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub id: String,
    pub name: String,
}

/// Ordered set of `K ≥ 2` classes. Classes are addressed by their position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSpace {
    classes: Vec<ClassInfo>,
    index: HashMap<String, usize>,
}

impl ClassSpace {
    pub fn new(classes: Vec<ClassInfo>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::invalid(format!(
                "a class space needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        let mut index = HashMap::with_capacity(classes.len());
        for (i, c) in classes.iter().enumerate() {
            if !is_valid_id(&c.id) {
                return Err(Error::invalid(format!("invalid class id {:?}", c.id)));
            }
            if index.insert(c.id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate class id {:?}", c.id)));
            }
        }
        Ok(Self { classes, index })
    }

    /// Class space whose ids and names are both taken from `ids`.
    pub fn from_ids<S: AsRef<str>>(ids: &[S]) -> Result<Self> {
        Self::new(
            ids.iter()
                .map(|s| ClassInfo {
                    id: s.as_ref().to_string(),
                    name: s.as_ref().to_string(),
                })
                .collect(),
        )
    }

    /// `K` anonymous classes named `c1..cK`.
    pub fn numbered(k: usize) -> Result<Self> {
        let ids: Vec<String> = (1..=k).map(|i| format!("c{i}")).collect();
        Self::from_ids(&ids)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn id(&self, class: usize) -> &str {
        &self.classes[class].id
    }

    pub fn name(&self, class: usize) -> &str {
        &self.classes[class].name
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &str) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| Error::consistency(format!("unknown class id {id:?}")))
    }
}

/// Identifiers are restricted to `[A-Za-z0-9_-]+` so delimited files never need quoting.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_single_class_and_duplicates() {
        assert!(ClassSpace::from_ids(&["a"]).is_err());
        assert!(ClassSpace::from_ids(&["a", "a"]).is_err());
        assert!(ClassSpace::from_ids(&["a", "b c"]).is_err());
    }

    #[test]
    fn lookups() {
        let cs = ClassSpace::from_ids(&["EB", "BE", "LPB", "CEP"]).unwrap();
        assert_eq!(cs.len(), 4);
        assert_eq!(cs.index_of("LPB"), Some(2));
        assert_eq!(cs.id(3), "CEP");
        assert!(cs.require("RRLYR").is_err());
    }
}
