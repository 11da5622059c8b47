//! Rule-based verb lemmatizer.
//!
//! Inflections of the catalog predicates come from an explicit table; any
//! other word goes through suffix rules, which are good enough for the
//! predicate filter because a miss there only ever drops a triple.

use std::collections::HashMap;
use std::sync::OnceLock;

/// Inflected forms for every catalog predicate.
const PREDICATE_FORMS: &[(&str, &[&str])] = &[
    ("decode", &["decodes", "decoded", "decoding"]),
    ("encode", &["encodes", "encoded", "encoding"]),
    ("verify", &["verifies", "verified", "verifying"]),
    ("access", &["accesses", "accessed", "accessing"]),
    (
        "reestablish",
        &[
            "reestablishes",
            "reestablished",
            "reestablishing",
            "re-establish",
            "re-establishes",
            "re-established",
            "re-establishing",
        ],
    ),
    ("count", &["counts", "counted", "counting"]),
    ("build", &["builds", "built", "building"]),
    ("complete", &["completes", "completed", "completing"]),
    ("append", &["appends", "appended", "appending"]),
    ("belong", &["belongs", "belonged", "belonging"]),
    ("store", &["stores", "stored", "storing"]),
    ("contain", &["contains", "contained", "containing"]),
    ("include", &["includes", "included", "including"]),
    ("combine", &["combines", "combined", "combining"]),
    ("imply", &["implies", "implied", "implying"]),
    ("establish", &["establishes", "established", "establishing"]),
    ("modify", &["modifies", "modified", "modifying"]),
    ("denote", &["denotes", "denoted", "denoting"]),
    (
        "utilize",
        &[
            "utilizes", "utilized", "utilizing", "utilise", "utilises", "utilised", "utilising",
        ],
    ),
    ("set", &["sets", "setting"]),
    ("change", &["changes", "changed", "changing"]),
    ("define", &["defines", "defined", "defining"]),
    ("=", &[]),
];

/// Irregular forms outside the catalog that the suffix rules get wrong.
const IRREGULAR: &[(&str, &str)] = &[
    ("is", "be"),
    ("are", "be"),
    ("was", "be"),
    ("were", "be"),
    ("been", "be"),
    ("being", "be"),
    ("has", "have"),
    ("had", "have"),
    ("does", "do"),
    ("did", "do"),
    ("done", "do"),
    ("sent", "send"),
    ("made", "make"),
    ("took", "take"),
    ("taken", "take"),
    ("gave", "give"),
    ("given", "give"),
    ("kept", "keep"),
    ("left", "leave"),
    ("began", "begin"),
    ("begun", "begin"),
];

fn table() -> &'static HashMap<&'static str, &'static str> {
    static TABLE: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut map = HashMap::new();
        for (lemma, forms) in PREDICATE_FORMS {
            map.insert(*lemma, *lemma);
            for form in *forms {
                map.insert(*form, *lemma);
            }
        }
        for (form, lemma) in IRREGULAR {
            map.insert(*form, *lemma);
        }
        map
    })
}

/// Table forms of a catalog predicate: third person singular first, then
/// the past form where it differs from the base, then the gerund.
pub fn predicate_forms(lemma: &str) -> Option<&'static [&'static str]> {
    PREDICATE_FORMS.iter().find(|(l, _)| *l == lemma).map(|(_, f)| *f)
}

/// Lowercase lemma of a verb surface form.
pub fn lemmatize(surface: &str) -> String {
    let word = surface.to_lowercase();
    if let Some(lemma) = table().get(word.as_str()) {
        return (*lemma).to_string();
    }
    suffix_rules(&word)
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn undouble(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 3 && b[n - 1] == b[n - 2] && !is_vowel(b[n - 1]) && !matches!(b[n - 1], b'l' | b's' | b'z') {
        stem[..n - 1].to_string()
    } else {
        stem.to_string()
    }
}

/// Restores a silent `e` after stripping -ed / -ing (`stor` -> `store`).
fn restore_e(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    let needs_e = matches!(b[n - 1], b'v' | b'c' | b'u')
        || (stem.ends_with("at") && !stem.ends_with("eat") && !stem.ends_with("oat"));
    if needs_e {
        return format!("{stem}e");
    }
    if n >= 2 && !is_vowel(b[n - 1]) && b[n - 1] != b'y' && b[n - 1] != b'w' && is_vowel(b[n - 2]) && (n < 3 || !is_vowel(b[n - 3])) {
        format!("{stem}e")
    } else {
        stem.to_string()
    }
}

fn suffix_rules(word: &str) -> String {
    if !word.is_ascii() || word.len() <= 3 {
        return word.to_string();
    }
    if let Some(stem) = word.strip_suffix("ies") {
        return format!("{stem}y");
    }
    if let Some(stem) = word.strip_suffix("ied") {
        return format!("{stem}y");
    }
    for ending in ["sses", "shes", "ches", "xes", "zes"] {
        if word.ends_with(ending) {
            return word[..word.len() - 2].to_string();
        }
    }
    if let Some(stem) = word.strip_suffix("ing") {
        if stem.len() >= 2 {
            let undoubled = undouble(stem);
            return if undoubled.len() < stem.len() {
                undoubled
            } else {
                restore_e(stem)
            };
        }
    }
    if let Some(stem) = word.strip_suffix("ed") {
        if stem.len() >= 2 {
            let undoubled = undouble(stem);
            return if undoubled.len() < stem.len() {
                undoubled
            } else {
                restore_e(stem)
            };
        }
    }
    if word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us") {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::srt::catalog::PredicateCatalog;

    #[test]
    fn every_catalog_inflection_maps_to_its_lemma() {
        let catalog = PredicateCatalog::standard();
        for (lemma, forms) in PREDICATE_FORMS {
            assert!(catalog.contains(lemma), "{lemma} missing from catalog");
            assert_eq!(lemmatize(lemma), *lemma);
            for form in *forms {
                assert_eq!(lemmatize(form), *lemma, "{form}");
            }
        }
        assert_eq!(PREDICATE_FORMS.len(), catalog.words().len());
    }

    #[test]
    fn case_is_folded() {
        assert_eq!(lemmatize("Includes"), "include");
        assert_eq!(lemmatize("VERIFIED"), "verify");
    }

    #[test]
    fn suffix_rules_cover_common_verbs() {
        for (form, lemma) in [
            ("schedules", "schedule"),
            ("scheduled", "schedule"),
            ("releases", "release"),
            ("transmits", "transmit"),
            ("transmitted", "transmit"),
            ("receives", "receive"),
            ("received", "receive"),
            ("applying", "apply"),
            ("applies", "apply"),
            ("indicates", "indicate"),
            ("performing", "perform"),
            ("initiated", "initiate"),
            ("treated", "treat"),
            ("produced", "produce"),
            ("continued", "continue"),
            ("is", "be"),
            ("sent", "send"),
            ("process", "process"),
        ] {
            assert_eq!(lemmatize(form), lemma, "{form}");
        }
    }
}
