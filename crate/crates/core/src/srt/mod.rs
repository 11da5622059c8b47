//! Source–relation–target triples from dependency parses.

pub mod catalog;
pub mod lemma;
pub mod parse;

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{strip_surrounding_punctuation, TerminologyLexicon};
pub use catalog::{PredicateCatalog, SecurityCategory};
pub use lemma::lemmatize;
pub use parse::{
    parse_dependencies, CommandBackend, CoreNlpBackend, DepEdge, FixtureBackend, ParsedSentence, ParserBackend,
    RawSentence,
};

#[derive(Debug, Error)]
pub enum SrtError {
    #[error("sentence {sentence_id}: empty text")]
    EmptySentence { sentence_id: String },
    #[error("sentence {sentence_id}: parser backend unavailable: {reason}")]
    BackendUnavailable { sentence_id: String, reason: String },
    #[error("sentence {sentence_id}: parse failure: {reason}")]
    ParseFailure { sentence_id: String, reason: String },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

/// Half-open token range, serialized as `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start < end, "empty span");
        Self { start, end }
    }

    pub fn single(index: usize) -> Self {
        Self::new(index, index + 1)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, index: usize) -> bool {
        (self.start..self.end).contains(&index)
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Self { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(s: Span) -> Self {
        (s.start, s.end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleSpans {
    pub source: Span,
    pub relation: Span,
    pub target: Span,
}

/// One extraction. The line format of the triples file is this struct's
/// JSON form.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrtTriple {
    pub sentence_id: String,
    pub source: String,
    pub relation: String,
    pub lemma: String,
    pub target: String,
    pub sentence: String,
    pub tokens: Vec<String>,
    pub spans: TripleSpans,
}

impl SrtTriple {
    /// Checks span bounds, disjointness and lemma casing.
    pub fn is_well_formed(&self) -> bool {
        let n = self.tokens.len();
        let s = &self.spans;
        [s.source, s.relation, s.target]
            .iter()
            .all(|sp| !sp.is_empty() && sp.end <= n)
            && !s.source.overlaps(&s.relation)
            && !s.source.overlaps(&s.target)
            && !s.relation.overlaps(&s.target)
            && self.lemma == self.lemma.to_lowercase()
    }
}

/// Which dependency patterns yield triples. Only subject–verb–object is on
/// by default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    /// `nsubj(v, s)` + `obl*/nmod*(v, t)`.
    pub prepositional: bool,
    /// `nsubj(h, s)` + `cop(h, c)`, relation `c`, target `h`.
    pub copula: bool,
}

fn is_subject(label: &str) -> bool {
    matches!(label, "nsubj" | "nsubj:pass" | "nsubjpass")
}

fn is_object(label: &str) -> bool {
    matches!(label, "obj" | "dobj")
}

fn is_oblique(label: &str) -> bool {
    label == "obl" || label.starts_with("obl:") || label == "nmod" || label.starts_with("nmod:")
}

/// Triples for every subject–verb–object pattern in the parse, ordered by
/// relation, source and target position.
pub fn extract_srt(parsed: &ParsedSentence, cfg: &ExtractConfig) -> Vec<SrtTriple> {
    let mut found: Vec<(usize, usize, usize)> = Vec::new();
    for subj in parsed.dep_edges.iter().filter(|e| is_subject(&e.label)) {
        let Some(head) = subj.head else { continue };
        let head_is_verb = parsed.pos_tags[head].starts_with("VB");
        if head_is_verb {
            for edge in parsed.edges_from(head) {
                let wanted = is_object(&edge.label) || (cfg.prepositional && is_oblique(&edge.label));
                if wanted && edge.dependent != subj.dependent {
                    found.push((subj.dependent, head, edge.dependent));
                }
            }
        } else if cfg.copula {
            for cop in parsed.edges_from(head).filter(|e| e.label == "cop") {
                found.push((subj.dependent, cop.dependent, head));
            }
        }
    }
    found.sort_by_key(|&(s, r, t)| (r, s, t));
    found.dedup();

    let sentence = parsed.sentence_text();
    found
        .into_iter()
        .filter(|&(s, r, t)| s != r && r != t && s != t)
        .map(|(s, r, t)| SrtTriple {
            sentence_id: parsed.sentence_id.clone(),
            source: parsed.tokens[s].clone(),
            relation: parsed.tokens[r].clone(),
            lemma: lemmatize(&parsed.tokens[r]),
            target: parsed.tokens[t].clone(),
            sentence: sentence.clone(),
            tokens: parsed.tokens.clone(),
            spans: TripleSpans {
                source: Span::single(s),
                relation: Span::single(r),
                target: Span::single(t),
            },
        })
        .collect()
}

/// Keeps triples whose source and target head words are lexicon terms.
pub fn filter_by_lexicon(triples: &[SrtTriple], lexicon: &TerminologyLexicon) -> Vec<SrtTriple> {
    let known = |w: &str| lexicon.contains(strip_surrounding_punctuation(w));
    triples
        .iter()
        .filter(|t| known(&t.source) && known(&t.target))
        .cloned()
        .collect()
}

/// Keeps triples whose relation lemma is a catalog predicate.
pub fn filter_by_predicate(triples: &[SrtTriple], catalog: &PredicateCatalog) -> Vec<SrtTriple> {
    triples
        .iter()
        .filter(|t| catalog.contains(&t.lemma))
        .cloned()
        .collect()
}

/// Both filters; order of the surviving triples is preserved.
pub fn filter_triples(
    triples: &[SrtTriple],
    lexicon: &TerminologyLexicon,
    catalog: &PredicateCatalog,
) -> Vec<SrtTriple> {
    filter_by_predicate(&filter_by_lexicon(triples, lexicon), catalog)
}

pub fn write_triples(mut out: impl Write, triples: &[SrtTriple]) -> std::io::Result<()> {
    for t in triples {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_triples(reader: impl BufRead) -> Result<Vec<SrtTriple>, SrtError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| SrtError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SrtError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_triples_file(path: &Path) -> Result<Vec<SrtTriple>, SrtError> {
    let file = std::fs::File::open(path).map_err(|e| SrtError::Io(format!("{}: {e}", path.display())))?;
    read_triples(std::io::BufReader::new(file))
}
