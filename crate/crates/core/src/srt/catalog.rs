use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Security category a formal-property predicate word belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SecurityCategory {
    Confidentiality,
    Integrity,
    Authentication,
    Accounting,
    Belong,
    Generation,
}

impl SecurityCategory {
    pub const ALL: [SecurityCategory; 6] = [
        SecurityCategory::Confidentiality,
        SecurityCategory::Integrity,
        SecurityCategory::Authentication,
        SecurityCategory::Accounting,
        SecurityCategory::Belong,
        SecurityCategory::Generation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SecurityCategory::Confidentiality => "Confidentiality",
            SecurityCategory::Integrity => "Integrity",
            SecurityCategory::Authentication => "Authentication",
            SecurityCategory::Accounting => "Accounting",
            SecurityCategory::Belong => "Belong",
            SecurityCategory::Generation => "Generation",
        }
    }
}

impl fmt::Display for SecurityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SecurityCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SecurityCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown security category `{s}`"))
    }
}

/// The expert-provided predicate words, in table order, with their category.
const PREDICATES: [(&str, SecurityCategory); 23] = [
    ("decode", SecurityCategory::Confidentiality),
    ("encode", SecurityCategory::Confidentiality),
    ("verify", SecurityCategory::Integrity),
    ("access", SecurityCategory::Authentication),
    ("reestablish", SecurityCategory::Authentication),
    ("count", SecurityCategory::Accounting),
    ("build", SecurityCategory::Belong),
    ("complete", SecurityCategory::Belong),
    ("append", SecurityCategory::Belong),
    ("belong", SecurityCategory::Belong),
    ("store", SecurityCategory::Belong),
    ("contain", SecurityCategory::Belong),
    ("include", SecurityCategory::Belong),
    ("combine", SecurityCategory::Belong),
    ("imply", SecurityCategory::Generation),
    ("establish", SecurityCategory::Generation),
    ("modify", SecurityCategory::Generation),
    ("denote", SecurityCategory::Generation),
    ("utilize", SecurityCategory::Generation),
    ("set", SecurityCategory::Generation),
    ("change", SecurityCategory::Generation),
    ("define", SecurityCategory::Generation),
    ("=", SecurityCategory::Generation),
];

/// Formal-property predicate words and their security categories.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredicateCatalog {
    words: Vec<&'static str>,
    categories: BTreeMap<&'static str, SecurityCategory>,
}

impl Default for PredicateCatalog {
    fn default() -> Self {
        Self::standard()
    }
}

impl PredicateCatalog {
    pub const LEN: usize = PREDICATES.len();

    pub fn standard() -> Self {
        Self {
            words: PREDICATES.iter().map(|(w, _)| *w).collect(),
            categories: PREDICATES.iter().copied().collect(),
        }
    }

    /// Words in table order.
    pub fn words(&self) -> &[&'static str] {
        &self.words
    }

    pub fn contains(&self, lemma: &str) -> bool {
        self.categories.contains_key(lemma)
    }

    pub fn category(&self, lemma: &str) -> Option<SecurityCategory> {
        self.categories.get(lemma).copied()
    }

    pub fn words_in(&self, category: SecurityCategory) -> Vec<&'static str> {
        self.words
            .iter()
            .copied()
            .filter(|w| self.categories[w] == category)
            .collect()
    }

    /// Canonical spelling of a lemma if it is a catalog word.
    pub fn canonical(&self, lemma: &str) -> Option<&'static str> {
        self.categories.get_key_value(lemma).map(|(k, _)| *k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_shape() {
        let catalog = PredicateCatalog::standard();
        assert_eq!(catalog.words().len(), 23);
        assert_eq!(catalog.category("include"), Some(SecurityCategory::Belong));
        assert_eq!(catalog.category("="), Some(SecurityCategory::Generation));
        assert_eq!(catalog.category("schedule"), None);
        let total: usize = SecurityCategory::ALL
            .iter()
            .map(|&c| catalog.words_in(c).len())
            .sum();
        assert_eq!(total, 23);
    }

    #[test]
    fn category_names_round_trip() {
        for c in SecurityCategory::ALL {
            assert_eq!(c.as_str().parse::<SecurityCategory>().unwrap(), c);
        }
        assert!("Availability".parse::<SecurityCategory>().is_err());
    }
}
