//! Terminology mining from tables embedded in specification documents.
//!
//! Tables arrive pre-extracted (one JSON object per table); every cell token
//! becomes a term candidate and a two-stage filter drops generic stopwords
//! and then expert-excluded domain terms.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed table record: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: page must be >= 1")]
    InvalidPage { line: usize },
}

/// One extracted table. Rows may be ragged.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableGrid {
    #[serde(rename = "doc")]
    pub source_doc: String,
    pub page: u32,
    pub rows: Vec<Vec<String>>,
}

impl TableGrid {
    pub fn cells(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().flatten().map(String::as_str)
    }
}

/// Where a term candidate was seen.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub doc: String,
    pub page: u32,
    pub table: usize,
}

/// How cell text becomes term candidates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellSplit {
    /// Whitespace tokens with surrounding punctuation removed.
    #[default]
    Whitespace,
    /// The whole trimmed cell is one candidate.
    WholeCell,
}

/// Term candidates with occurrence counts, keyed by surface form.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TermCandidates {
    counts: BTreeMap<String, usize>,
    provenance: BTreeMap<String, Vec<Provenance>>,
}

impl TermCandidates {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, term: &str, at: Provenance) {
        *self.counts.entry(term.to_string()).or_default() += 1;
        let seen = self.provenance.entry(term.to_string()).or_default();
        if !seen.contains(&at) {
            seen.push(at);
        }
    }

    pub fn count(&self, term: &str) -> usize {
        self.counts.get(term).copied().unwrap_or(0)
    }

    /// Number of occurrences (multiset cardinality).
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Number of distinct surface forms.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.counts.iter().map(|(t, &c)| (t.as_str(), c))
    }

    pub fn provenance(&self, term: &str) -> &[Provenance] {
        self.provenance.get(term).map_or(&[], Vec::as_slice)
    }
}

impl From<&TerminologyLexicon> for TermCandidates {
    fn from(lexicon: &TerminologyLexicon) -> Self {
        let mut out = TermCandidates::new();
        for (term, sources) in &lexicon.provenance {
            out.counts.insert(term.clone(), sources.len().max(1));
            out.provenance.insert(term.clone(), sources.clone());
        }
        out
    }
}

/// Normalization applied before stop-list and exclusion matching.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalize {
    pub casefold: bool,
    pub strip_punctuation: bool,
}

impl Default for Normalize {
    fn default() -> Self {
        Self {
            casefold: true,
            strip_punctuation: true,
        }
    }
}

impl Normalize {
    pub fn apply(&self, term: &str) -> String {
        let stripped = if self.strip_punctuation {
            strip_surrounding_punctuation(term.trim())
        } else {
            term.trim()
        };
        if self.casefold {
            stripped.to_lowercase()
        } else {
            stripped.to_string()
        }
    }
}

/// Settings of the two-stage filter.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub stop_list: BTreeSet<String>,
    pub domain_exclude_list: BTreeSet<String>,
    pub normalize: Normalize,
    pub cell_split: CellSplit,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self::new(
            stop_words::get("en").iter().copied(),
            std::iter::empty::<&str>(),
            Normalize::default(),
        )
    }
}

impl FilterConfig {
    /// Builds a config whose lists are normalized with `normalize`; empty
    /// entries are discarded.
    pub fn new<S: AsRef<str>, D: AsRef<str>>(
        stop_list: impl IntoIterator<Item = S>,
        domain_exclude_list: impl IntoIterator<Item = D>,
        normalize: Normalize,
    ) -> Self {
        let norm = |items: Vec<String>| -> BTreeSet<String> {
            items
                .iter()
                .map(|w| normalize.apply(w))
                .filter(|w| !w.is_empty())
                .collect()
        };
        Self {
            stop_list: norm(stop_list.into_iter().map(|s| s.as_ref().to_string()).collect()),
            domain_exclude_list: norm(
                domain_exclude_list
                    .into_iter()
                    .map(|s| s.as_ref().to_string())
                    .collect(),
            ),
            normalize,
            cell_split: CellSplit::Whitespace,
        }
    }

    /// Re-applies normalization to the lists, e.g. after deserializing
    /// hand-written config.
    pub fn normalized(self) -> Self {
        let cell_split = self.cell_split;
        let mut cfg = Self::new(self.stop_list, self.domain_exclude_list, self.normalize);
        cfg.cell_split = cell_split;
        cfg
    }

    fn rejects(&self, key: &str) -> bool {
        key.is_empty() || self.stop_list.contains(key) || self.domain_exclude_list.contains(key)
    }
}

/// Filtered domain terms, stored with their original casing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminologyLexicon {
    provenance: BTreeMap<String, Vec<Provenance>>,
}

impl TerminologyLexicon {
    pub fn contains(&self, term: &str) -> bool {
        self.provenance.contains_key(term)
    }

    pub fn len(&self) -> usize {
        self.provenance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provenance.is_empty()
    }

    /// Terms in sorted order.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.provenance.keys().map(String::as_str)
    }

    pub fn provenance(&self, term: &str) -> Option<&[Provenance]> {
        self.provenance.get(term).map(Vec::as_slice)
    }

    pub fn from_terms<S: Into<String>>(terms: impl IntoIterator<Item = S>) -> Self {
        Self {
            provenance: terms.into_iter().map(|t| (t.into(), Vec::new())).collect(),
        }
    }

    /// One term per line, sorted, LF endings.
    pub fn write_text(&self, mut out: impl Write) -> std::io::Result<()> {
        for term in self.terms() {
            writeln!(out, "{term}")?;
        }
        Ok(())
    }

    pub fn write_provenance(&self, out: impl Write) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(out, &self.provenance)
    }

    pub fn save(&self, terms_path: &Path, provenance_path: &Path) -> Result<(), IngestError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| IngestError::Io { path, source }
        };
        let mut terms = std::fs::File::create(terms_path).map_err(io(terms_path))?;
        self.write_text(&mut terms).map_err(io(terms_path))?;
        let sidecar = std::fs::File::create(provenance_path).map_err(io(provenance_path))?;
        self.write_provenance(std::io::BufWriter::new(sidecar))
            .map_err(|e| IngestError::Io {
                path: provenance_path.display().to_string(),
                source: e.into(),
            })
    }

    /// Loads a lexicon text file, attaching the provenance sidecar when it exists.
    pub fn load(terms_path: &Path, provenance_path: Option<&Path>) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(terms_path).map_err(|source| IngestError::Io {
            path: terms_path.display().to_string(),
            source,
        })?;
        let mut lexicon = Self::from_terms(text.lines().map(str::trim).filter(|l| !l.is_empty()));
        if let Some(path) = provenance_path.filter(|p| p.exists()) {
            let raw = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let sidecar: BTreeMap<String, Vec<Provenance>> = serde_json::from_str(&raw)
                .map_err(|source| IngestError::Malformed { line: 0, source })?;
            for (term, sources) in sidecar {
                if let Some(slot) = lexicon.provenance.get_mut(&term) {
                    *slot = sources;
                }
            }
        }
        Ok(lexicon)
    }
}

fn is_edge_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '–' | '—' | '…')
}

/// Removes leading and trailing punctuation, keeping interior characters
/// such as hyphens and camel case intact.
pub fn strip_surrounding_punctuation(token: &str) -> &str {
    token.trim_matches(is_edge_punctuation)
}

/// Cell tokens under the whitespace rule; tokens that are only punctuation vanish.
pub fn cell_tokens(cell: &str) -> impl Iterator<Item = &str> {
    cell.split_whitespace()
        .map(strip_surrounding_punctuation)
        .filter(|t| !t.is_empty())
}

/// Every token of every cell, with counts and provenance.
pub fn collect_table_terms(tables: &[TableGrid], split: CellSplit) -> TermCandidates {
    let mut candidates = TermCandidates::new();
    for (index, table) in tables.iter().enumerate() {
        let at = Provenance {
            doc: table.source_doc.clone(),
            page: table.page,
            table: index,
        };
        for cell in table.cells() {
            match split {
                CellSplit::Whitespace => {
                    for token in cell_tokens(cell) {
                        candidates.add(token, at.clone());
                    }
                }
                CellSplit::WholeCell => {
                    let joined = cell.split_whitespace().collect::<Vec<_>>().join(" ");
                    let term = strip_surrounding_punctuation(&joined);
                    if !term.is_empty() {
                        candidates.add(term, at.clone());
                    }
                }
            }
        }
    }
    candidates
}

/// Generic stopwords first, then expert domain exclusions.
pub fn hierarchical_filter(candidates: &TermCandidates, cfg: &FilterConfig) -> TerminologyLexicon {
    let mut provenance = BTreeMap::new();
    for (term, _) in candidates.iter() {
        let key = cfg.normalize.apply(term);
        if cfg.rejects(&key) {
            continue;
        }
        provenance.insert(term.to_string(), candidates.provenance(term).to_vec());
    }
    TerminologyLexicon { provenance }
}

/// Reads the JSON Lines table format. Blank lines are skipped.
pub fn read_tables(reader: impl BufRead) -> Result<Vec<TableGrid>, IngestError> {
    let mut tables = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| IngestError::Io {
            path: "<tables>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let table: TableGrid =
            serde_json::from_str(&line).map_err(|source| IngestError::Malformed { line: i + 1, source })?;
        if table.page == 0 {
            return Err(IngestError::InvalidPage { line: i + 1 });
        }
        tables.push(table);
    }
    Ok(tables)
}

pub fn read_tables_file(path: &Path) -> Result<Vec<TableGrid>, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_tables(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&[&str]]) -> TableGrid {
        TableGrid {
            source_doc: "38331".into(),
            page: 1,
            rows: rows
                .iter()
                .map(|r| r.iter().map(|c| c.to_string()).collect())
                .collect(),
        }
    }

    fn cfg(stop: &[&str], exclude: &[&str]) -> FilterConfig {
        FilterConfig::new(stop.iter().copied(), exclude.iter().copied(), Normalize::default())
    }

    #[test]
    fn collects_cell_tokens() {
        let t = table(&[&["RRCReconfiguration", "the masterCellGroup"]]);
        let c = collect_table_terms(&[t], CellSplit::Whitespace);
        assert_eq!(c.total(), 3);
        assert_eq!(c.count("RRCReconfiguration"), 1);
        assert_eq!(c.count("the"), 1);
        assert_eq!(c.count("masterCellGroup"), 1);
        assert_eq!(c.provenance("the")[0].table, 0);
    }

    #[test]
    fn empty_input_gives_empty_candidates() {
        assert!(collect_table_terms(&[], CellSplit::Whitespace).is_empty());
    }

    #[test]
    fn punctuation_is_stripped_at_edges_only() {
        let t = table(&[&["(sl-ConfigDedicatedNR),", "--", "k1-Value;"]]);
        let c = collect_table_terms(&[t], CellSplit::Whitespace);
        assert_eq!(c.count("sl-ConfigDedicatedNR"), 1);
        assert_eq!(c.count("k1-Value"), 1);
        assert_eq!(c.total(), 2);
    }

    #[test]
    fn whole_cell_mode_keeps_phrases() {
        let t = table(&[&["  the   masterCellGroup. "]]);
        let c = collect_table_terms(&[t], CellSplit::WholeCell);
        assert_eq!(c.count("the masterCellGroup"), 1);
        assert_eq!(c.distinct(), 1);
    }

    #[test]
    fn stopword_stage() {
        let c = collect_table_terms(&[table(&[&["the RRCSetup"]])], CellSplit::Whitespace);
        let lex = hierarchical_filter(&c, &cfg(&["the"], &[]));
        assert_eq!(lex.terms().collect::<Vec<_>>(), ["RRCSetup"]);
    }

    #[test]
    fn domain_exclusion_stage() {
        let c = collect_table_terms(&[table(&[&["RRCSetup", "weather"]])], CellSplit::Whitespace);
        let lex = hierarchical_filter(&c, &cfg(&[], &["weather"]));
        assert_eq!(lex.terms().collect::<Vec<_>>(), ["RRCSetup"]);
    }

    #[test]
    fn matching_is_casefolded_but_surface_is_kept() {
        let c = collect_table_terms(&[table(&[&["The", "RRCSetup", "Weather"]])], CellSplit::Whitespace);
        let lex = hierarchical_filter(&c, &cfg(&["THE"], &["weather"]));
        assert_eq!(lex.terms().collect::<Vec<_>>(), ["RRCSetup"]);
    }

    #[test]
    fn empty_entries_are_dropped_from_lists() {
        let c = cfg(&["", "  ", "..."], &[""]);
        assert!(c.stop_list.is_empty());
        assert!(c.domain_exclude_list.is_empty());
    }

    #[test]
    fn default_stop_list_is_english() {
        let c = FilterConfig::default();
        assert!(c.stop_list.contains("the"));
        assert!(c.stop_list.contains("and"));
    }

    #[test]
    fn reads_json_lines_tables() {
        let input = "{\"doc\": \"38331\", \"page\": 3, \"rows\": [[\"a\", \"b\"], [\"c\"]]}\n\n";
        let tables = read_tables(input.as_bytes()).unwrap();
        assert_eq!(tables.len(), 1);
        assert_eq!(tables[0].cells().count(), 3);
        let bad_page = "{\"doc\": \"x\", \"page\": 0, \"rows\": []}";
        assert!(matches!(read_tables(bad_page.as_bytes()), Err(IngestError::InvalidPage { line: 1 })));
        assert!(matches!(read_tables("{".as_bytes()), Err(IngestError::Malformed { .. })));
    }

    #[test]
    fn lexicon_text_and_sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = collect_table_terms(&[table(&[&["RRCSetup", "SIB1"]])], CellSplit::Whitespace);
        let lex = hierarchical_filter(&c, &cfg(&[], &[]));
        let (t, p) = (dir.path().join("lexicon.txt"), dir.path().join("lexicon.json"));
        lex.save(&t, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&t).unwrap(), "RRCSetup\nSIB1\n");
        assert_eq!(TerminologyLexicon::load(&t, Some(&p)).unwrap(), lex);
    }
}
