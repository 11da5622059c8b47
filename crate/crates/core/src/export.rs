//! Formal dependency table and predicate frequency report.
//!
//! Confidences are rounded to 6 significant digits when a record is built,
//! so CSV and JSON Lines round trips are exact.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AnnotatedExample, FormalPropertyLabelMap, IdentifierLabel, ModelReadyExample, OUTSIDE};
use crate::ingest::strip_surrounding_punctuation;
use crate::srt::{PredicateCatalog, SecurityCategory};
use crate::train::Prediction;

pub const COLUMNS: [&str; 7] = [
    "identifier0",
    "identifier1",
    "predicate",
    "category",
    "sentence_id",
    "mode",
    "confidence",
];

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("io error on {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("malformed record {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("invalid record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },
    #[error("predictions do not line up with examples: {0}")]
    Misaligned(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordMode {
    GoldAnnotation,
    ModelPrediction,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "jsonl" => Ok(TableFormat::Jsonl),
            other => Err(format!("unknown table format `{other}` (expected csv or jsonl)")),
        }
    }
}

impl fmt::Display for TableFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableFormat::Csv => "csv",
            TableFormat::Jsonl => "jsonl",
        })
    }
}

/// One row of the formal dependency table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormalDependencyRecord {
    pub identifier0: String,
    pub identifier1: String,
    pub predicate: String,
    pub category: SecurityCategory,
    pub sentence_id: String,
    pub mode: RecordMode,
    /// Present exactly for model predictions, in (0, 1].
    pub confidence: Option<f64>,
}

impl FormalDependencyRecord {
    pub fn validate(&self, catalog: &PredicateCatalog) -> Result<(), String> {
        match catalog.category(&self.predicate) {
            Some(c) if c == self.category => {}
            Some(c) => return Err(format!("{} belongs to {c}, not {}", self.predicate, self.category)),
            None => return Err(format!("{} is not a catalog predicate", self.predicate)),
        }
        match (self.mode, self.confidence) {
            (RecordMode::GoldAnnotation, None) => Ok(()),
            (RecordMode::ModelPrediction, Some(c)) if c > 0.0 && c <= 1.0 => Ok(()),
            (RecordMode::GoldAnnotation, Some(_)) => Err("gold records carry no confidence".into()),
            _ => Err("prediction confidence must be in (0, 1]".into()),
        }
    }
}

/// Rounds to `digits` significant digits.
pub fn round_significant(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().expect("formatted float parses")
}

/// First run of `label` before `limit`, joined and stripped of edge punctuation.
fn span_text(words: &[String], labels: &[usize], label: IdentifierLabel, limit: usize) -> Option<String> {
    let start = labels[..limit].iter().position(|&l| l == label.id())?;
    let end = labels[start..limit]
        .iter()
        .position(|&l| l != label.id())
        .map_or(limit, |n| start + n);
    let text = words[start..end].join(" ");
    let name = strip_surrounding_punctuation(&text);
    (!name.is_empty()).then(|| name.to_string())
}

/// One gold record per annotated example.
pub fn records_from_examples(
    examples: &[AnnotatedExample],
    fp_labels: &FormalPropertyLabelMap,
    catalog: &PredicateCatalog,
) -> Vec<FormalDependencyRecord> {
    examples
        .iter()
        .filter_map(|e| {
            let limit = e.sentence_len;
            let predicate = fp_labels.name(e.gold_relation_id)?.to_string();
            Some(FormalDependencyRecord {
                identifier0: span_text(&e.words, &e.identifier_labels, IdentifierLabel::Identifier0, limit)?,
                identifier1: span_text(&e.words, &e.identifier_labels, IdentifierLabel::Identifier1, limit)?,
                category: catalog.category(&predicate)?,
                predicate,
                sentence_id: e.sentence_id.clone(),
                mode: RecordMode::GoldAnnotation,
                confidence: None,
            })
        })
        .collect()
}

/// Prediction records. Identifiers are the first predicted runs in the
/// sentence portion; the predicate is read at the gold relation word when
/// it is predicted non-`O` there, otherwise at the most confident non-`O`
/// sentence word. Examples without both identifiers and a predicate yield
/// no record.
pub fn records_from_predictions(
    examples: &[AnnotatedExample],
    ready: &[ModelReadyExample],
    predictions: &[Prediction],
    fp_labels: &FormalPropertyLabelMap,
    catalog: &PredicateCatalog,
) -> Result<Vec<FormalDependencyRecord>, ExportError> {
    if examples.len() != ready.len() || ready.len() != predictions.len() {
        return Err(ExportError::Misaligned(format!(
            "{} examples, {} aligned, {} predictions",
            examples.len(),
            ready.len(),
            predictions.len()
        )));
    }
    let mut records = Vec::new();
    for ((e, r), p) in examples.iter().zip(ready).zip(predictions) {
        if e.sentence_id != r.sentence_id || r.word_spans.len() != e.words.len() || p.identifier.len() != r.len() {
            return Err(ExportError::Misaligned(e.sentence_id.clone()));
        }
        let first: Vec<usize> = r.word_spans.iter().map(|s| s.start).collect();
        let idf: Vec<usize> = first.iter().map(|&s| p.identifier[s]).collect();
        let limit = e.sentence_len;
        let candidates = |w: usize| {
            let s = first[w];
            (p.formal_property[s] != OUTSIDE).then_some((w, p.formal_property[s], p.fp_confidence[s]))
        };
        let chosen = e.relation_position().and_then(candidates).or_else(|| {
            (0..limit)
                .filter_map(candidates)
                .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)))
        });
        let (Some(id0), Some(id1), Some((_, fp, conf))) = (
            span_text(&e.words, &idf, IdentifierLabel::Identifier0, limit),
            span_text(&e.words, &idf, IdentifierLabel::Identifier1, limit),
            chosen,
        ) else {
            continue;
        };
        let Some(predicate) = fp_labels.name(fp) else { continue };
        let Some(category) = catalog.category(predicate) else { continue };
        records.push(FormalDependencyRecord {
            identifier0: id0,
            identifier1: id1,
            predicate: predicate.to_string(),
            category,
            sentence_id: e.sentence_id.clone(),
            mode: RecordMode::ModelPrediction,
            confidence: Some(round_significant(conf, 6).max(f64::MIN_POSITIVE)),
        });
    }
    Ok(records)
}

fn check(records: &[FormalDependencyRecord], catalog: &PredicateCatalog) -> Result<(), ExportError> {
    for (index, r) in records.iter().enumerate() {
        r.validate(catalog)
            .map_err(|reason| ExportError::InvalidRecord { index, reason })?;
    }
    Ok(())
}

fn io_err(path: &str) -> impl Fn(String) -> ExportError + '_ {
    move |reason| ExportError::Io {
        path: path.to_string(),
        reason,
    }
}

/// CSV with a header row; an empty table is the header alone.
pub fn write_csv(out: impl Write, records: &[FormalDependencyRecord]) -> Result<(), ExportError> {
    let err = io_err("<csv>");
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(COLUMNS).map_err(|e| err(e.to_string()))?;
    for r in records {
        w.serialize(r).map_err(|e| err(e.to_string()))?;
    }
    w.flush().map_err(|e| err(e.to_string()))
}

pub fn read_csv(input: impl std::io::Read) -> Result<Vec<FormalDependencyRecord>, ExportError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| ExportError::Malformed {
        index: 0,
        reason: e.to_string(),
    })?;
    if header.iter().ne(COLUMNS) {
        return Err(ExportError::Malformed {
            index: 0,
            reason: format!("unexpected header {header:?}"),
        });
    }
    r.deserialize()
        .enumerate()
        .map(|(index, row)| {
            row.map_err(|e| ExportError::Malformed {
                index,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn write_jsonl(mut out: impl Write, records: &[FormalDependencyRecord]) -> Result<(), ExportError> {
    let err = io_err("<jsonl>");
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| err(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| err(e.to_string()))?;
    }
    out.flush().map_err(|e| err(e.to_string()))
}

pub fn read_jsonl(input: impl BufRead) -> Result<Vec<FormalDependencyRecord>, ExportError> {
    let mut records = Vec::new();
    for (index, line) in input.lines().enumerate() {
        let line = line.map_err(|e| ExportError::Malformed {
            index,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| ExportError::Malformed {
            index,
            reason: e.to_string(),
        })?);
    }
    Ok(records)
}

/// Validates every record, then writes the table to `path`.
pub fn export_dependency_table(
    records: &[FormalDependencyRecord],
    format: TableFormat,
    path: &Path,
    catalog: &PredicateCatalog,
) -> Result<(), ExportError> {
    check(records, catalog)?;
    let shown = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| io_err(&shown)(e.to_string()))?;
    let mut out = std::io::BufWriter::new(file);
    match format {
        TableFormat::Csv => write_csv(&mut out, records),
        TableFormat::Jsonl => write_jsonl(&mut out, records),
    }
    .map_err(|e| match e {
        ExportError::Io { reason, .. } => io_err(&shown)(reason),
        other => other,
    })?;
    out.flush().map_err(|e| io_err(&shown)(e.to_string()))
}

pub fn import_dependency_table(path: &Path, format: TableFormat) -> Result<Vec<FormalDependencyRecord>, ExportError> {
    let shown = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| io_err(&shown)(e.to_string()))?;
    let reader = std::io::BufReader::new(file);
    match format {
        TableFormat::Csv => read_csv(reader),
        TableFormat::Jsonl => read_jsonl(reader),
    }
}

/// Frequency of one predicate in a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateStat {
    pub predicate: String,
    pub id: usize,
    pub category: SecurityCategory,
    pub count: usize,
}

/// Per-predicate counts, most frequent first, ties by label id. Predicates
/// absent from the dataset are omitted.
pub fn summarize_catalog(
    examples: &[AnnotatedExample],
    fp_labels: &FormalPropertyLabelMap,
    catalog: &PredicateCatalog,
) -> Vec<PredicateStat> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for e in examples {
        *counts.entry(e.gold_relation_id).or_default() += 1;
    }
    let mut stats: Vec<PredicateStat> = counts
        .into_iter()
        .filter_map(|(id, count)| {
            let predicate = fp_labels.name(id)?;
            Some(PredicateStat {
                predicate: predicate.to_string(),
                id,
                category: catalog.category(predicate)?,
                count,
            })
        })
        .collect();
    stats.sort_by(|a, b| b.count.cmp(&a.count).then(a.id.cmp(&b.id)));
    stats
}

pub fn write_summary_csv(out: impl Write, stats: &[PredicateStat]) -> Result<(), ExportError> {
    let err = io_err("<csv>");
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["predicate", "id", "category", "count"])
        .map_err(|e| err(e.to_string()))?;
    for s in stats {
        w.serialize(s).map_err(|e| err(e.to_string()))?;
    }
    w.flush().map_err(|e| err(e.to_string()))
}
