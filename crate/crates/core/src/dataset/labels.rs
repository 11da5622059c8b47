use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::DatasetError;
use crate::srt::PredicateCatalog;

/// Label id shared by both label maps for "not an identifier / not a predicate".
pub const OUTSIDE: usize = 0;
pub const OUTSIDE_NAME: &str = "O";

/// Token roles: outside, source identifier, target identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IdentifierLabel {
    O = 0,
    Identifier0 = 1,
    Identifier1 = 2,
}

impl IdentifierLabel {
    pub const ALL: [IdentifierLabel; 3] = [IdentifierLabel::O, IdentifierLabel::Identifier0, IdentifierLabel::Identifier1];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            IdentifierLabel::O => OUTSIDE_NAME,
            IdentifierLabel::Identifier0 => "identifier0",
            IdentifierLabel::Identifier1 => "identifier1",
        }
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }
}

/// The fixed three-label identifier map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IdentifierLabelMap;

impl IdentifierLabelMap {
    pub const LEN: usize = 3;

    pub fn len(&self) -> usize {
        Self::LEN
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        IdentifierLabel::from_name(name).map(IdentifierLabel::id)
    }

    pub fn name(&self, id: usize) -> Option<&'static str> {
        IdentifierLabel::from_id(id).map(IdentifierLabel::name)
    }

    pub fn to_json(&self) -> BTreeMap<String, usize> {
        IdentifierLabel::ALL
            .iter()
            .map(|l| (l.name().to_string(), l.id()))
            .collect()
    }
}

/// `O` plus one id per catalog predicate.
///
/// Ids follow first appearance in the corpus the map was built from;
/// predicates never seen there take the remaining ids in catalog order.
/// Once written to its sidecar the map is reloaded, never rebuilt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormalPropertyLabelMap {
    names: Vec<String>,
    ids: BTreeMap<String, usize>,
}

impl FormalPropertyLabelMap {
    pub const LEN: usize = PredicateCatalog::LEN + 1;

    /// Lemmas that are not catalog words are ignored.
    pub fn from_first_appearance<'a>(
        lemmas: impl IntoIterator<Item = &'a str>,
        catalog: &PredicateCatalog,
    ) -> Self {
        let mut names = vec![OUTSIDE_NAME.to_string()];
        let push = |w: &str, names: &mut Vec<String>| {
            if catalog.contains(w) && !names.iter().any(|n| n == w) {
                names.push(w.to_string());
            }
        };
        for lemma in lemmas {
            push(lemma, &mut names);
        }
        for w in catalog.words() {
            push(w, &mut names);
        }
        Self::from_names(names)
    }

    fn from_names(names: Vec<String>) -> Self {
        let ids = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self { names, ids }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, lemma: &str) -> Option<usize> {
        self.ids.get(lemma).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    /// Names in id order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Rebuilds from a `name -> id` object, checking bijectivity and that the
    /// domain is exactly the catalog plus `O`.
    pub fn from_json_map(map: &BTreeMap<String, usize>, catalog: &PredicateCatalog) -> Result<Self, DatasetError> {
        let invalid = |reason: String| DatasetError::InvalidLabelMap(reason);
        if map.len() != Self::LEN {
            return Err(invalid(format!("expected {} labels, found {}", Self::LEN, map.len())));
        }
        let mut names = vec![String::new(); map.len()];
        for (name, &id) in map {
            if id >= names.len() || !names[id].is_empty() {
                return Err(invalid(format!("id {id} for `{name}` is out of range or duplicated")));
            }
            if name != OUTSIDE_NAME && !catalog.contains(name) {
                return Err(invalid(format!("`{name}` is not a catalog predicate")));
            }
            names[id] = name.clone();
        }
        if names[OUTSIDE] != OUTSIDE_NAME {
            return Err(invalid("`O` must have id 0".into()));
        }
        Ok(Self::from_names(names))
    }

    pub fn to_json_map(&self) -> BTreeMap<String, usize> {
        self.ids.clone()
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let json = serde_json::to_string_pretty(&self.to_json_map()).expect("label map serializes");
        std::fs::write(path, json + "\n").map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path, catalog: &PredicateCatalog) -> Result<Self, DatasetError> {
        let raw = std::fs::read_to_string(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
        let map: BTreeMap<String, usize> =
            serde_json::from_str(&raw).map_err(|e| DatasetError::InvalidLabelMap(e.to_string()))?;
        Self::from_json_map(&map, catalog)
    }

    /// SHA-256 over the names in id order.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.names {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifier_map_is_fixed() {
        let m = IdentifierLabelMap;
        assert_eq!(m.len(), 3);
        assert_eq!(m.id("O"), Some(0));
        assert_eq!(m.id("identifier0"), Some(1));
        assert_eq!(m.id("identifier1"), Some(2));
        for id in 0..3 {
            assert_eq!(m.id(m.name(id).unwrap()), Some(id));
        }
        assert_eq!(m.name(3), None);
    }

    #[test]
    fn fp_ids_follow_first_appearance() {
        let catalog = PredicateCatalog::standard();
        let m = FormalPropertyLabelMap::from_first_appearance(["verify", "include", "schedule", "verify"], &catalog);
        assert_eq!(m.len(), 24);
        assert_eq!(m.id("O"), Some(0));
        assert_eq!(m.id("verify"), Some(1));
        assert_eq!(m.id("include"), Some(2));
        assert_eq!(m.id("schedule"), None);
        // unseen predicates follow in catalog order
        assert_eq!(m.id("decode"), Some(3));
        assert_eq!(m.id("encode"), Some(4));
        assert_eq!(m.id("access"), Some(5));
    }

    #[test]
    fn sidecar_reload_is_identical() {
        let catalog = PredicateCatalog::standard();
        let m = FormalPropertyLabelMap::from_first_appearance(["contain", "utilize"], &catalog);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fp_labels.json");
        m.save(&path).unwrap();
        let back = FormalPropertyLabelMap::load(&path, &catalog).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.fingerprint(), m.fingerprint());
    }

    #[test]
    fn malformed_sidecars_are_rejected() {
        let catalog = PredicateCatalog::standard();
        let good = FormalPropertyLabelMap::from_first_appearance([], &catalog).to_json_map();

        let mut dup = good.clone();
        *dup.get_mut("include").unwrap() = dup["contain"];
        assert!(FormalPropertyLabelMap::from_json_map(&dup, &catalog).is_err());

        let mut foreign = good.clone();
        let id = foreign.remove("include").unwrap();
        foreign.insert("schedule".into(), id);
        assert!(FormalPropertyLabelMap::from_json_map(&foreign, &catalog).is_err());

        let mut short = good;
        short.remove("=");
        assert!(FormalPropertyLabelMap::from_json_map(&short, &catalog).is_err());
    }
}
