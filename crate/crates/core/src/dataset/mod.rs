//! Labeled training examples built from filtered triples.

pub mod labels;
pub mod synth;
pub mod tokenizer;

use std::io::{BufRead, Write};
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::srt::SrtTriple;
pub use labels::{FormalPropertyLabelMap, IdentifierLabel, IdentifierLabelMap, OUTSIDE};
pub use synth::{generate_synthetic_corpus, SynthConfig, SyntheticCorpus};
pub use tokenizer::{VocabOptions, WordPieceTokenizer};

/// Word placed between the sentence and the appended triple words.
pub const SEPARATOR: &str = tokenizer::SEP;
pub const DEFAULT_MAX_WORDS: usize = 200;
pub const DEFAULT_MAX_SEQ_LEN: usize = 256;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("sentence {sentence_id}: source and target spans overlap")]
    SpanConflict { sentence_id: String },
    #[error("sentence {sentence_id}: relation lemma `{lemma}` has no formal-property label")]
    UnknownPredicate { sentence_id: String, lemma: String },
    #[error("sentence {sentence_id}: {len} subwords exceed the limit of {max}")]
    TooLong { sentence_id: String, len: usize, max: usize },
    #[error("split would leave an empty side ({examples} examples, valid fraction {fraction})")]
    EmptySplit { examples: usize, fraction: f64 },
    #[error("invalid example {sentence_id}: {reason}")]
    InvalidExample { sentence_id: String, reason: String },
    #[error("invalid label map: {0}")]
    InvalidLabelMap(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

/// Sentence words followed by the separator and the triple's words, with
/// per-word identifier and formal-property labels. Labels live on the
/// sentence portion only.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedExample {
    pub sentence_id: String,
    pub words: Vec<String>,
    /// Number of leading words that belong to the sentence.
    pub sentence_len: usize,
    pub identifier_labels: Vec<usize>,
    pub fp_labels: Vec<usize>,
    pub gold_relation_id: usize,
}

impl AnnotatedExample {
    /// Position of the word carrying the gold formal-property label.
    pub fn relation_position(&self) -> Option<usize> {
        self.fp_labels.iter().position(|&l| l != OUTSIDE)
    }

    /// Maximal runs of `label` as half-open ranges.
    pub fn label_runs(&self, label: IdentifierLabel) -> Vec<Range<usize>> {
        let mut runs = Vec::new();
        let mut start = None;
        for (i, &l) in self.identifier_labels.iter().chain([&usize::MAX]).enumerate() {
            match (l == label.id(), start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    runs.push(s..i);
                    start = None;
                }
                _ => {}
            }
        }
        runs
    }

    /// Checks every structural invariant; `max_words` bounds the sentence part.
    pub fn validate(&self, max_words: Option<usize>) -> Result<(), DatasetError> {
        let bad = |reason: String| DatasetError::InvalidExample {
            sentence_id: self.sentence_id.clone(),
            reason,
        };
        let n = self.words.len();
        if self.identifier_labels.len() != n || self.fp_labels.len() != n {
            return Err(bad("label sequences do not align with words".into()));
        }
        if self.sentence_len == 0 || self.sentence_len >= n || self.words[self.sentence_len] != SEPARATOR {
            return Err(bad("separator is not at the end of the sentence portion".into()));
        }
        if self.identifier_labels.iter().any(|&l| l >= IdentifierLabelMap::LEN) {
            return Err(bad("identifier label out of range".into()));
        }
        if self.fp_labels.iter().any(|&l| l >= FormalPropertyLabelMap::LEN) {
            return Err(bad("formal-property label out of range".into()));
        }
        for label in [IdentifierLabel::Identifier0, IdentifierLabel::Identifier1] {
            let runs = self.label_runs(label);
            if runs.len() != 1 {
                return Err(bad(format!("{} spans labeled {}", runs.len(), label.name())));
            }
            if runs[0].end > self.sentence_len {
                return Err(bad(format!("{} span outside the sentence", label.name())));
            }
        }
        let fp_positions: Vec<usize> = (0..n).filter(|&i| self.fp_labels[i] != OUTSIDE).collect();
        match fp_positions.as_slice() {
            [p] if *p < self.sentence_len && self.fp_labels[*p] == self.gold_relation_id => {}
            [] => return Err(bad("no formal-property label".into())),
            _ => return Err(bad("formal-property labels are inconsistent".into())),
        }
        if let Some(max) = max_words {
            if self.sentence_len > max {
                return Err(bad(format!("{} sentence words exceed {max}", self.sentence_len)));
            }
        }
        Ok(())
    }
}

/// Labels one triple: source span `identifier0`, target span `identifier1`,
/// relation word its predicate id; everything else `O`.
pub fn annotate(triple: &SrtTriple, fp_labels: &FormalPropertyLabelMap) -> Result<AnnotatedExample, DatasetError> {
    let spans = &triple.spans;
    if spans.source.overlaps(&spans.target) {
        return Err(DatasetError::SpanConflict {
            sentence_id: triple.sentence_id.clone(),
        });
    }
    let invalid = |reason: &str| DatasetError::InvalidExample {
        sentence_id: triple.sentence_id.clone(),
        reason: reason.to_string(),
    };
    if !triple.is_well_formed() {
        return Err(invalid("triple spans are out of range or overlap"));
    }
    let relation_id = fp_labels
        .id(&triple.lemma)
        .filter(|&id| id != OUTSIDE)
        .ok_or_else(|| DatasetError::UnknownPredicate {
            sentence_id: triple.sentence_id.clone(),
            lemma: triple.lemma.clone(),
        })?;

    let sentence_len = triple.tokens.len();
    let mut words = triple.tokens.clone();
    words.push(SEPARATOR.to_string());
    words.extend([triple.source.clone(), triple.relation.clone(), triple.target.clone()]);

    let mut identifier_labels = vec![IdentifierLabel::O.id(); words.len()];
    for i in spans.source.start..spans.source.end {
        identifier_labels[i] = IdentifierLabel::Identifier0.id();
    }
    for i in spans.target.start..spans.target.end {
        identifier_labels[i] = IdentifierLabel::Identifier1.id();
    }
    let mut fp = vec![OUTSIDE; words.len()];
    fp[spans.relation.start] = relation_id;

    let example = AnnotatedExample {
        sentence_id: triple.sentence_id.clone(),
        words,
        sentence_len,
        identifier_labels,
        fp_labels: fp,
        gold_relation_id: relation_id,
    };
    example.validate(None)?;
    Ok(example)
}

/// Annotates every triple; rejected triples are logged and counted.
pub fn annotate_all(triples: &[SrtTriple], fp_labels: &FormalPropertyLabelMap) -> (Vec<AnnotatedExample>, usize) {
    let mut rejected = 0;
    let examples = triples
        .iter()
        .filter_map(|t| match annotate(t, fp_labels) {
            Ok(e) => Some(e),
            Err(e) => {
                log::warn!("dropping triple: {e}");
                rejected += 1;
                None
            }
        })
        .collect();
    (examples, rejected)
}

/// Keeps examples whose sentence has at most `max_words` words.
pub fn length_filter(examples: Vec<AnnotatedExample>, max_words: usize) -> Vec<AnnotatedExample> {
    examples.into_iter().filter(|e| e.sentence_len <= max_words).collect()
}

/// Subword view of an example. Only the first subword of a word carries its
/// label; continuations and the `[CLS]` / `[SEP]` wrappers carry `None`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelReadyExample {
    pub sentence_id: String,
    pub input_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub identifier_labels: Vec<Option<usize>>,
    pub fp_labels: Vec<Option<usize>>,
    /// Subword range of each word.
    pub word_spans: Vec<Range<usize>>,
}

impl ModelReadyExample {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    /// Word-level labels recovered from first subwords.
    pub fn word_labels(&self) -> (Vec<usize>, Vec<usize>) {
        self.word_spans
            .iter()
            .map(|r| {
                (
                    self.identifier_labels[r.start].expect("first subword is labeled"),
                    self.fp_labels[r.start].expect("first subword is labeled"),
                )
            })
            .unzip()
    }

    /// Subword position of the gold relation word.
    pub fn relation_position(&self) -> Option<usize> {
        self.fp_labels.iter().position(|l| l.is_some_and(|id| id != OUTSIDE))
    }
}

pub fn align_to_subwords(
    example: &AnnotatedExample,
    tokenizer: &WordPieceTokenizer,
    max_len: usize,
) -> Result<ModelReadyExample, DatasetError> {
    let mut input_ids = vec![tokenizer.cls_id()];
    let mut identifier_labels = vec![None];
    let mut fp_labels = vec![None];
    let mut word_spans = Vec::with_capacity(example.words.len());
    for (i, word) in example.words.iter().enumerate() {
        let pieces = tokenizer.tokenize_word(word);
        let start = input_ids.len();
        for (k, id) in pieces.into_iter().enumerate() {
            input_ids.push(id);
            identifier_labels.push((k == 0).then_some(example.identifier_labels[i]));
            fp_labels.push((k == 0).then_some(example.fp_labels[i]));
        }
        word_spans.push(start..input_ids.len());
    }
    input_ids.push(tokenizer.sep_id());
    identifier_labels.push(None);
    fp_labels.push(None);
    if input_ids.len() > max_len {
        return Err(DatasetError::TooLong {
            sentence_id: example.sentence_id.clone(),
            len: input_ids.len(),
            max: max_len,
        });
    }
    Ok(ModelReadyExample {
        sentence_id: example.sentence_id.clone(),
        attention_mask: vec![1; input_ids.len()],
        input_ids,
        identifier_labels,
        fp_labels,
        word_spans,
    })
}

/// Aligns every example, dropping (and counting) the ones that are too long.
pub fn align_all(
    examples: &[AnnotatedExample],
    tokenizer: &WordPieceTokenizer,
    max_len: usize,
) -> (Vec<ModelReadyExample>, usize) {
    let mut dropped = 0;
    let ready = examples
        .iter()
        .filter_map(|e| match align_to_subwords(e, tokenizer, max_len) {
            Ok(r) => Some(r),
            Err(err) => {
                log::warn!("{err}");
                dropped += 1;
                None
            }
        })
        .collect();
    (ready, dropped)
}

/// Number of validation examples: `round(n * fraction)` clamped to `1..=n-1`.
pub fn validation_size(n: usize, valid_fraction: f64) -> Result<usize, DatasetError> {
    if n < 2 || !(valid_fraction > 0.0 && valid_fraction < 1.0) {
        return Err(DatasetError::EmptySplit {
            examples: n,
            fraction: valid_fraction,
        });
    }
    Ok(((n as f64 * valid_fraction).round() as usize).clamp(1, n - 1))
}

/// Seeded shuffle, then the first `validation_size` examples become the
/// validation split.
pub fn split_dataset<T: Clone>(examples: &[T], valid_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>), DatasetError> {
    let n_valid = validation_size(examples.len(), valid_fraction)?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let valid = order[..n_valid].iter().map(|&i| examples[i].clone()).collect();
    let train = order[n_valid..].iter().map(|&i| examples[i].clone()).collect();
    Ok((train, valid))
}

pub fn write_examples(mut out: impl Write, examples: &[AnnotatedExample]) -> std::io::Result<()> {
    for e in examples {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_examples(path: &Path, examples: &[AnnotatedExample]) -> Result<(), DatasetError> {
    let file = std::fs::File::create(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    write_examples(&mut out, examples)
        .and_then(|_| out.flush())
        .map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))
}

pub fn read_examples(reader: impl BufRead) -> Result<Vec<AnnotatedExample>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let example: AnnotatedExample = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        example.validate(None)?;
        out.push(example);
    }
    Ok(out)
}

pub fn load_examples(path: &Path) -> Result<Vec<AnnotatedExample>, DatasetError> {
    let file = std::fs::File::open(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    read_examples(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::srt::{PredicateCatalog, Span, TripleSpans};

    fn triple(tokens: &[&str], s: usize, r: usize, t: usize, lemma: &str) -> SrtTriple {
        SrtTriple {
            sentence_id: "x".into(),
            source: tokens[s].into(),
            relation: tokens[r].into(),
            lemma: lemma.into(),
            target: tokens[t].into(),
            sentence: tokens.join(" "),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            spans: TripleSpans {
                source: Span::single(s),
                relation: Span::single(r),
                target: Span::single(t),
            },
        }
    }

    fn fp_map() -> FormalPropertyLabelMap {
        FormalPropertyLabelMap::from_first_appearance(["include"], &PredicateCatalog::standard())
    }

    fn includes() -> SrtTriple {
        triple(&["The", "RRCReconfiguration", "includes", "the", "masterCellGroup"], 1, 2, 4, "include")
    }

    #[test]
    fn annotates_the_worked_sentence() {
        let map = fp_map();
        let e = annotate(&includes(), &map).unwrap();
        assert_eq!(
            e.words,
            ["The", "RRCReconfiguration", "includes", "the", "masterCellGroup", "[SEP]", "RRCReconfiguration", "includes", "masterCellGroup"]
        );
        assert_eq!(e.identifier_labels, [0, 1, 0, 0, 2, 0, 0, 0, 0]);
        let inc = map.id("include").unwrap();
        assert_eq!(e.fp_labels, [0, 0, inc, 0, 0, 0, 0, 0, 0]);
        assert_eq!(e.gold_relation_id, inc);
        assert_eq!(e.relation_position(), Some(2));
        assert_eq!(e.sentence_len, 5);
    }

    #[test]
    fn same_source_and_target_span_conflicts() {
        let t = triple(&["UE", "verifies", "UE"], 0, 1, 0, "verify");
        let map = FormalPropertyLabelMap::from_first_appearance([], &PredicateCatalog::standard());
        assert!(matches!(annotate(&t, &map), Err(DatasetError::SpanConflict { .. })));
    }

    #[test]
    fn non_catalog_lemma_is_rejected() {
        let t = triple(&["A", "schedules", "B"], 0, 1, 2, "schedule");
        assert!(matches!(annotate(&t, &fp_map()), Err(DatasetError::UnknownPredicate { .. })));
    }

    fn with_sentence_len(n: usize) -> AnnotatedExample {
        let mut tokens: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        tokens[0] = "A".into();
        tokens[1] = "includes".into();
        tokens[2] = "B".into();
        let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
        annotate(&triple(&refs, 0, 1, 2, "include"), &fp_map()).unwrap()
    }

    #[test]
    fn length_filter_boundary() {
        let kept = length_filter(vec![with_sentence_len(200), with_sentence_len(201)], 200);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].sentence_len, 200);
    }

    #[test]
    fn alignment_marks_continuations() {
        let tok = WordPieceTokenizer::from_tokens(
            ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "The", "RRC", "##Re", "##con", "##fig", "##uration", "includes", "the", "master", "##Cell", "##Group"]
                .map(String::from)
                .to_vec(),
        )
        .unwrap();
        let e = annotate(&includes(), &fp_map()).unwrap();
        let ready = align_to_subwords(&e, &tok, 256).unwrap();
        let span = ready.word_spans[1].clone();
        assert_eq!(span.len(), 5);
        let labels: Vec<Option<usize>> = ready.identifier_labels[span].to_vec();
        assert_eq!(labels, [Some(1), None, None, None, None]);
        assert_eq!(ready.input_ids[0], tok.cls_id());
        assert_eq!(*ready.input_ids.last().unwrap(), tok.sep_id());
        assert_eq!(ready.word_labels(), (e.identifier_labels.clone(), e.fp_labels.clone()));
        assert_eq!(ready.relation_position(), Some(ready.word_spans[2].start));
    }

    #[test]
    fn alignment_without_splits_is_identity() {
        let plain = triple(&["UE", "includes", "K"], 0, 1, 2, "include");
        let e = annotate(&plain, &fp_map()).unwrap();
        let tok = WordPieceTokenizer::build(e.words.iter().map(String::as_str), VocabOptions::default());
        let ready = align_to_subwords(&e, &tok, 256).unwrap();
        let inner: Vec<Option<usize>> = ready.identifier_labels[1..ready.len() - 1].to_vec();
        assert_eq!(inner, e.identifier_labels.iter().map(|&l| Some(l)).collect::<Vec<_>>());
    }

    #[test]
    fn overlong_examples_are_reported() {
        let e = with_sentence_len(300);
        let tok = WordPieceTokenizer::build(e.words.iter().map(String::as_str), VocabOptions::default());
        assert!(matches!(align_to_subwords(&e, &tok, 256), Err(DatasetError::TooLong { .. })));
        let (ok, dropped) = align_all(&[e, with_sentence_len(10)], &tok, 256);
        assert_eq!((ok.len(), dropped), (1, 1));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let items: Vec<u32> = (0..10).collect();
        let (train, valid) = split_dataset(&items, 0.2, 7).unwrap();
        assert_eq!((train.len(), valid.len()), (8, 2));
        assert_eq!(split_dataset(&items, 0.2, 7).unwrap(), (train.clone(), valid.clone()));
        let mut union: Vec<u32> = train.into_iter().chain(valid).collect();
        union.sort_unstable();
        assert_eq!(union, items);

        let (a, b) = split_dataset(&[1, 2], 0.99, 0).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
        assert!(matches!(split_dataset(&[1], 0.5, 0), Err(DatasetError::EmptySplit { .. })));
        assert!(matches!(split_dataset(&[1, 2, 3], 1.0, 0), Err(DatasetError::EmptySplit { .. })));
    }

    #[test]
    fn examples_round_trip_through_json_lines() {
        let e = annotate(&includes(), &fp_map()).unwrap();
        let mut buf = Vec::new();
        write_examples(&mut buf, std::slice::from_ref(&e)).unwrap();
        assert_eq!(read_examples(buf.as_slice()).unwrap(), vec![e]);
    }
}
