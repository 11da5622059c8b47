//! Pipeline stages over an output directory.
//!
//! Each stage reads the artifacts of the previous ones from `output_dir`,
//! writes its own, and records a manifest under `manifests/`. Stages are
//! deterministic for a fixed configuration.

pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    align_all, annotate_all, length_filter, load_examples, save_examples, split_dataset, AnnotatedExample,
    DatasetError, FormalPropertyLabelMap, IdentifierLabelMap, ModelReadyExample, VocabOptions, WordPieceTokenizer,
};
use crate::export::{
    export_dependency_table, records_from_examples, records_from_predictions, summarize_catalog, write_summary_csv,
    ExportError, TableFormat,
};
use crate::ingest::{collect_table_terms, hierarchical_filter, read_tables_file, IngestError, TerminologyLexicon};
use crate::model::{JointModel, ModelError};
use crate::srt::parse::{parse_dependencies, read_parsed_file, read_raw_sentences, RawSentence};
use crate::srt::{
    extract_srt, filter_by_lexicon, filter_by_predicate, read_triples_file, write_triples, PredicateCatalog, SrtError,
    SrtTriple,
};
use crate::train::{error_distribution_from, evaluate, save_metrics_csv, train, MetricRecord, MetricsError, TrainError};
pub use config::{ExportSource, PipelineConfig};
pub use manifest::{sha256_hex, RunManifest};

/// Artifact names inside `output_dir`.
pub mod files {
    pub const LEXICON: &str = "lexicon.txt";
    pub const LEXICON_PROVENANCE: &str = "lexicon_provenance.json";
    pub const INGEST_STATS: &str = "ingest_stats.json";
    pub const TRIPLES_RAW: &str = "triples_raw.jsonl";
    pub const TRIPLES: &str = "triples.jsonl";
    pub const EXTRACT_STATS: &str = "extract_stats.json";
    pub const SYNTH_STATS: &str = "synth_stats.json";
    pub const DATASET: &str = "dataset.jsonl";
    pub const TRAIN_SPLIT: &str = "train.jsonl";
    pub const VALID_SPLIT: &str = "valid.jsonl";
    pub const FP_LABELS: &str = "fp_labels.json";
    pub const IDENTIFIER_LABELS: &str = "identifier_labels.json";
    pub const VOCAB: &str = "vocab.txt";
    pub const DATASET_STATS: &str = "dataset_stats.json";
    pub const MODEL_DIR: &str = "model";
    pub const METRICS: &str = "metrics.csv";
    pub const CONFUSION: &str = "confusion.json";
    pub const EVAL: &str = "eval.json";
    pub const EVAL_CONFUSION: &str = "eval_confusion.json";
    pub const TABLE_CSV: &str = "dependency_table.csv";
    pub const TABLE_JSONL: &str = "dependency_table.jsonl";
    pub const PREDICATE_SUMMARY: &str = "predicate_summary.csv";
    pub const MANIFESTS: &str = "manifests";
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0} is not set in the config")]
    MissingPath(&'static str),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Srt(#[from] SrtError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Export(#[from] ExportError),
}

impl PipelineError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }

    /// Stable machine-readable error class.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::MissingPath(_) => "missing_path",
            PipelineError::Io { .. } => "io",
            PipelineError::Ingest(_) => "ingest",
            PipelineError::Srt(_) => "srt",
            PipelineError::Dataset(_) => "dataset",
            PipelineError::Model(_) => "model",
            PipelineError::Train(_) => "train",
            PipelineError::Metrics(_) => "metrics",
            PipelineError::Export(_) => "export",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub tables: usize,
    pub cells: usize,
    pub candidates: usize,
    pub distinct_candidates: usize,
    pub terms: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractStats {
    pub sentences: usize,
    pub parse_failures: usize,
    pub raw: usize,
    pub lexicon_filtered: usize,
    pub predicate_filtered: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub triples: usize,
    pub annotated: usize,
    pub rejected: usize,
    pub length_filtered: usize,
    pub too_long: usize,
    pub train: usize,
    pub valid: usize,
    pub vocab_size: usize,
    pub label_map_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub variant: String,
    pub epochs: usize,
    pub final_metrics: MetricRecord,
    pub model_dir: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub split: EvalSplit,
    pub examples: usize,
    pub acc_idf: f64,
    pub acc_fprop: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub source: ExportSource,
    pub format: TableFormat,
    pub records: usize,
    pub skipped: usize,
    pub table: String,
}

/// Stage counts, each `None` until its stage has run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Funnel {
    pub tables: Option<usize>,
    pub terms: Option<usize>,
    pub raw: Option<usize>,
    pub lexicon_filtered: Option<usize>,
    pub predicate_filtered: Option<usize>,
    pub length_filtered: Option<usize>,
}

impl Funnel {
    /// The triple counts that are present never increase stage to stage.
    pub fn is_monotone(&self) -> bool {
        let present: Vec<usize> = [self.raw, self.lexicon_filtered, self.predicate_filtered, self.length_filtered]
            .into_iter()
            .flatten()
            .collect();
        present.windows(2).all(|w| w[0] >= w[1])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Train,
    #[default]
    Valid,
    All,
}

impl std::str::FromStr for EvalSplit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(EvalSplit::Train),
            "valid" => Ok(EvalSplit::Valid),
            "all" => Ok(EvalSplit::All),
            other => Err(format!("unknown split `{other}` (expected train, valid or all)")),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, json + "\n").map_err(|e| PipelineError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::io(path, e))
}

fn require(path: &Option<PathBuf>, name: &'static str) -> Result<PathBuf, PipelineError> {
    let p = path.clone().ok_or(PipelineError::MissingPath(name))?;
    if !p.exists() {
        return Err(PipelineError::io(&p, "no such file"));
    }
    Ok(p)
}

/// Resolved pipeline bound to its output directory.
pub struct Pipeline {
    pub config: PipelineConfig,
    catalog: PredicateCatalog,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Self {
            config,
            catalog: PredicateCatalog::standard(),
        }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.config.paths.output_dir.join(name)
    }

    fn prepare(&self) -> Result<(), PipelineError> {
        let dir = &self.config.paths.output_dir;
        std::fs::create_dir_all(dir.join(files::MANIFESTS)).map_err(|e| PipelineError::io(dir, e))
    }

    /// SHA-256 of the resolved configuration.
    pub fn config_hash(&self) -> String {
        sha256_hex(serde_json::to_string(&self.config).expect("config serializes").as_bytes())
    }

    fn manifest(&self, command: &str, seed: u64) -> RunManifest {
        RunManifest::new(command, self.config_hash(), seed)
    }

    fn finish(&self, m: RunManifest) -> Result<(), PipelineError> {
        m.save(&self.out(files::MANIFESTS).join(format!("{}.json", m.command)))
    }

    fn root(&self) -> &Path {
        &self.config.paths.output_dir
    }

    pub fn ingest(&self) -> Result<IngestStats, PipelineError> {
        let tables_path = require(&self.config.paths.tables, "paths.tables")?;
        let filter = self.config.filter.resolve()?;
        self.prepare()?;
        let tables = read_tables_file(&tables_path)?;
        let candidates = collect_table_terms(&tables, filter.cell_split);
        let lexicon = hierarchical_filter(&candidates, &filter);
        let (terms, prov) = (self.out(files::LEXICON), self.out(files::LEXICON_PROVENANCE));
        lexicon.save(&terms, &prov)?;
        let stats = IngestStats {
            tables: tables.len(),
            cells: tables.iter().map(|t| t.cells().count()).sum(),
            candidates: candidates.total(),
            distinct_candidates: candidates.distinct(),
            terms: lexicon.len(),
        };
        write_json(&self.out(files::INGEST_STATS), &stats)?;
        let mut m = self.manifest("ingest", 0);
        m.input(&tables_path, self.root())?;
        for p in [&terms, &prov, &self.out(files::INGEST_STATS)] {
            m.output(p, self.root())?;
        }
        self.finish(m)?;
        Ok(stats)
    }

    fn sentences(&self) -> Result<Vec<RawSentence>, PipelineError> {
        let paths = &self.config.paths;
        if let Some(path) = &paths.sentences {
            let file = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
            return Ok(read_raw_sentences(std::io::BufReader::new(file))?);
        }
        let parsed = require(&paths.parsed, "paths.sentences")?;
        Ok(read_parsed_file(&parsed)?
            .into_iter()
            .map(|p| RawSentence {
                text: p.sentence_text(),
                sentence_id: p.sentence_id,
            })
            .collect())
    }

    pub fn extract(&self) -> Result<ExtractStats, PipelineError> {
        let lexicon_path = self.out(files::LEXICON);
        let lexicon = TerminologyLexicon::load(&lexicon_path, None)?;
        let sentences = self.sentences()?;
        let backend = self.config.backend.build(&self.config.paths)?;
        let cfg = self.config.extract;
        let parse = |s: &RawSentence| parse_dependencies(s, backend.as_ref());
        let parsed: Vec<_> = if backend.supports_concurrency() {
            sentences.par_iter().map(parse).collect()
        } else {
            sentences.iter().map(parse).collect()
        };
        let mut raw: Vec<SrtTriple> = Vec::new();
        let mut parse_failures = 0;
        for result in parsed {
            match result {
                Ok(p) => raw.extend(extract_srt(&p, &cfg)),
                Err(e @ SrtError::BackendUnavailable { .. }) => return Err(e.into()),
                Err(e) => {
                    log::warn!("{e}");
                    parse_failures += 1;
                }
            }
        }
        let lex = filter_by_lexicon(&raw, &lexicon);
        let kept = filter_by_predicate(&lex, &self.catalog);
        self.prepare()?;
        self.write_triples(&self.out(files::TRIPLES_RAW), &raw)?;
        self.write_triples(&self.out(files::TRIPLES), &kept)?;
        let stats = ExtractStats {
            sentences: sentences.len(),
            parse_failures,
            raw: raw.len(),
            lexicon_filtered: lex.len(),
            predicate_filtered: kept.len(),
        };
        write_json(&self.out(files::EXTRACT_STATS), &stats)?;
        let mut m = self.manifest("extract", 0);
        m.input(&lexicon_path, self.root())?;
        for p in [&self.config.paths.sentences, &self.config.paths.parsed].into_iter().flatten() {
            m.input(p, self.root())?;
        }
        for name in [files::TRIPLES_RAW, files::TRIPLES, files::EXTRACT_STATS] {
            m.output(&self.out(name), self.root())?;
        }
        self.finish(m)?;
        Ok(stats)
    }

    fn write_triples(&self, path: &Path, triples: &[SrtTriple]) -> Result<(), PipelineError> {
        let file = std::fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        write_triples(&mut out, triples).map_err(|e| PipelineError::io(path, e))?;
        std::io::Write::flush(&mut out).map_err(|e| PipelineError::io(path, e))
    }

    /// Labels, length filter, vocabulary and train/valid split.
    pub fn build_dataset(&self) -> Result<DatasetStats, PipelineError> {
        let ds = &self.config.dataset;
        let triples_path = self.out(files::TRIPLES);
        let triples = read_triples_file(&triples_path)?;
        let fp_labels = FormalPropertyLabelMap::from_first_appearance(triples.iter().map(|t| t.lemma.as_str()), &self.catalog);
        let (annotated, rejected) = annotate_all(&triples, &fp_labels);
        let annotated_count = annotated.len();
        let kept = length_filter(annotated, ds.max_words);
        let tokenizer = match &ds.vocab {
            Some(path) => WordPieceTokenizer::load(path)?,
            None => WordPieceTokenizer::build(
                kept.iter().flat_map(|e| e.words.iter().map(String::as_str)),
                VocabOptions {
                    min_frequency: ds.min_frequency,
                    max_entries: ds.max_vocab_entries,
                },
            ),
        };
        let (fits, too_long): (Vec<AnnotatedExample>, Vec<AnnotatedExample>) = kept
            .iter()
            .cloned()
            .partition(|e| crate::dataset::align_to_subwords(e, &tokenizer, ds.max_seq_len).is_ok());
        for e in &too_long {
            log::warn!("{}: longer than {} subwords, dropped", e.sentence_id, ds.max_seq_len);
        }
        let (train_set, valid_set) = split_dataset(&fits, ds.valid_fraction, ds.seed)?;

        self.prepare()?;
        fp_labels.save(&self.out(files::FP_LABELS))?;
        write_json(&self.out(files::IDENTIFIER_LABELS), &IdentifierLabelMap.to_json())?;
        tokenizer.save(&self.out(files::VOCAB))?;
        save_examples(&self.out(files::DATASET), &kept)?;
        save_examples(&self.out(files::TRAIN_SPLIT), &train_set)?;
        save_examples(&self.out(files::VALID_SPLIT), &valid_set)?;
        let stats = DatasetStats {
            triples: triples.len(),
            annotated: annotated_count,
            rejected,
            length_filtered: kept.len(),
            too_long: too_long.len(),
            train: train_set.len(),
            valid: valid_set.len(),
            vocab_size: tokenizer.vocab_size(),
            label_map_hash: fp_labels.fingerprint(),
        };
        write_json(&self.out(files::DATASET_STATS), &stats)?;
        let mut m = self.manifest("build-dataset", ds.seed);
        m.label_map_hash = Some(stats.label_map_hash.clone());
        m.input(&triples_path, self.root())?;
        for name in [
            files::FP_LABELS,
            files::IDENTIFIER_LABELS,
            files::VOCAB,
            files::DATASET,
            files::TRAIN_SPLIT,
            files::VALID_SPLIT,
            files::DATASET_STATS,
        ] {
            m.output(&self.out(name), self.root())?;
        }
        self.finish(m)?;
        Ok(stats)
    }

    /// Writes a synthetic triple file, then builds the dataset from it.
    pub fn synth(&self) -> Result<DatasetStats, PipelineError> {
        let corpus = crate::dataset::generate_synthetic_corpus(&self.config.synth);
        self.prepare()?;
        self.write_triples(&self.out(files::TRIPLES), &corpus.triples)?;
        let summary = summarize_catalog(&corpus.examples, &corpus.fp_labels, &self.catalog);
        write_json(&self.out(files::SYNTH_STATS), &summary)?;
        let mut m = self.manifest("synth", self.config.synth.seed);
        m.label_map_hash = Some(corpus.fp_labels.fingerprint());
        for name in [files::TRIPLES, files::SYNTH_STATS] {
            m.output(&self.out(name), self.root())?;
        }
        self.finish(m)?;
        self.build_dataset()
    }

    fn load_labels_and_vocab(&self, dir: &Path) -> Result<(FormalPropertyLabelMap, WordPieceTokenizer), PipelineError> {
        let labels = FormalPropertyLabelMap::load(&dir.join(files::FP_LABELS), &self.catalog)?;
        let vocab = WordPieceTokenizer::load(&dir.join(files::VOCAB))?;
        Ok((labels, vocab))
    }

    fn aligned(&self, name: &str, tok: &WordPieceTokenizer) -> Result<(Vec<AnnotatedExample>, Vec<ModelReadyExample>), PipelineError> {
        let examples = load_examples(&self.out(name))?;
        let (ready, dropped) = align_all(&examples, tok, self.config.dataset.max_seq_len);
        if dropped > 0 {
            return Err(DatasetError::InvalidExample {
                sentence_id: name.to_string(),
                reason: format!("{dropped} examples no longer fit the sequence limit"),
            }
            .into());
        }
        Ok((examples, ready))
    }

    pub fn train(&self) -> Result<TrainSummary, PipelineError> {
        let (fp_labels, tok) = self.load_labels_and_vocab(self.root())?;
        let (_, train_set) = self.aligned(files::TRAIN_SPLIT, &tok)?;
        let (_, valid_set) = self.aligned(files::VALID_SPLIT, &tok)?;
        let model_config = self
            .config
            .model
            .model_config(tok.vocab_size(), self.config.dataset.max_seq_len);
        let cfg = self.config.train_config();
        let (model, history) = train::<f32>(model_config, &train_set, &valid_set, &cfg)?;

        let model_dir = self.out(files::MODEL_DIR);
        model.save(&model_dir)?;
        fp_labels.save(&model_dir.join(files::FP_LABELS))?;
        tok.save(&model_dir.join(files::VOCAB))?;
        save_metrics_csv(&self.out(files::METRICS), &history)?;
        let eval = evaluate(&model, &valid_set, &cfg)?;
        let dist = error_distribution_from(&eval.predictions, &valid_set, &fp_labels)?;
        write_json(&self.out(files::CONFUSION), &dist)?;

        let mut m = self.manifest("train", cfg.seed);
        m.label_map_hash = Some(fp_labels.fingerprint());
        for name in [files::TRAIN_SPLIT, files::VALID_SPLIT, files::FP_LABELS, files::VOCAB] {
            m.input(&self.out(name), self.root())?;
        }
        for p in [
            model_dir.join(crate::model::io::MODEL_FILE),
            model_dir.join(crate::model::io::WEIGHTS_FILE),
            self.out(files::METRICS),
            self.out(files::CONFUSION),
        ] {
            m.output(&p, self.root())?;
        }
        self.finish(m)?;
        Ok(TrainSummary {
            variant: model.variant().to_string(),
            epochs: history.len(),
            final_metrics: history.last().cloned().expect("at least one epoch"),
            model_dir: model_dir.display().to_string(),
        })
    }

    fn load_model(&self) -> Result<(JointModel<f32>, FormalPropertyLabelMap, WordPieceTokenizer), PipelineError> {
        let dir = self.out(files::MODEL_DIR);
        let model = JointModel::<f32>::load(&dir)?;
        let (labels, tok) = self.load_labels_and_vocab(&dir)?;
        Ok((model, labels, tok))
    }

    fn split_file(split: EvalSplit) -> &'static str {
        match split {
            EvalSplit::Train => files::TRAIN_SPLIT,
            EvalSplit::Valid => files::VALID_SPLIT,
            EvalSplit::All => files::DATASET,
        }
    }

    pub fn eval(&self, split: EvalSplit) -> Result<EvalSummary, PipelineError> {
        let (model, fp_labels, tok) = self.load_model()?;
        let name = Self::split_file(split);
        let (_, ready) = self.aligned(name, &tok)?;
        let cfg = self.config.train_config();
        let eval = evaluate(&model, &ready, &cfg)?;
        let dist = error_distribution_from(&eval.predictions, &ready, &fp_labels)?;
        let summary = EvalSummary {
            split,
            examples: ready.len(),
            acc_idf: eval.acc_idf,
            acc_fprop: eval.acc_fprop,
            loss: eval.loss,
        };
        write_json(&self.out(files::EVAL), &summary)?;
        write_json(&self.out(files::EVAL_CONFUSION), &dist)?;
        let mut m = self.manifest("eval", cfg.seed);
        m.label_map_hash = Some(fp_labels.fingerprint());
        m.input(&self.out(name), self.root())?;
        m.input(&self.out(files::MODEL_DIR).join(crate::model::io::WEIGHTS_FILE), self.root())?;
        m.output(&self.out(files::EVAL), self.root())?;
        m.output(&self.out(files::EVAL_CONFUSION), self.root())?;
        self.finish(m)?;
        Ok(summary)
    }

    pub fn export(&self) -> Result<ExportSummary, PipelineError> {
        let settings = &self.config.export;
        let examples = load_examples(&self.out(files::DATASET))?;
        let (records, fp_labels) = match settings.source {
            ExportSource::Gold => {
                let labels = FormalPropertyLabelMap::load(&self.out(files::FP_LABELS), &self.catalog)?;
                (records_from_examples(&examples, &labels, &self.catalog), labels)
            }
            ExportSource::Predictions => {
                let (model, labels, tok) = self.load_model()?;
                let (examples, ready) = self.aligned(files::DATASET, &tok)?;
                let eval = evaluate(&model, &ready, &self.config.train_config())?;
                let records = records_from_predictions(&examples, &ready, &eval.predictions, &labels, &self.catalog)?;
                (records, labels)
            }
        };
        let table = self.out(match settings.format {
            TableFormat::Csv => files::TABLE_CSV,
            TableFormat::Jsonl => files::TABLE_JSONL,
        });
        export_dependency_table(&records, settings.format, &table, &self.catalog)?;
        let summary_path = self.out(files::PREDICATE_SUMMARY);
        let file = std::fs::File::create(&summary_path).map_err(|e| PipelineError::io(&summary_path, e))?;
        write_summary_csv(file, &summarize_catalog(&examples, &fp_labels, &self.catalog))?;

        let mut m = self.manifest("export", 0);
        m.label_map_hash = Some(fp_labels.fingerprint());
        m.input(&self.out(files::DATASET), self.root())?;
        m.output(&table, self.root())?;
        m.output(&summary_path, self.root())?;
        self.finish(m)?;
        Ok(ExportSummary {
            source: settings.source,
            format: settings.format,
            records: records.len(),
            skipped: examples.len() - records.len(),
            table: table.display().to_string(),
        })
    }

    /// Funnel counts from whatever stage statistics exist.
    pub fn report(&self) -> Result<Funnel, PipelineError> {
        let load = |name: &str| -> Result<Option<serde_json::Value>, PipelineError> {
            let path = self.out(name);
            if path.exists() {
                read_json(&path).map(Some)
            } else {
                Ok(None)
            }
        };
        let field = |v: &Option<serde_json::Value>, key: &str| {
            v.as_ref()
                .and_then(|v| v.get(key))
                .and_then(|x| x.as_u64())
                .map(|x| x as usize)
        };
        let ingest = load(files::INGEST_STATS)?;
        let extract = load(files::EXTRACT_STATS)?;
        let dataset = load(files::DATASET_STATS)?;
        Ok(Funnel {
            tables: field(&ingest, "tables"),
            terms: field(&ingest, "terms"),
            raw: field(&extract, "raw"),
            lexicon_filtered: field(&extract, "lexicon_filtered"),
            predicate_filtered: field(&extract, "predicate_filtered"),
            length_filtered: field(&dataset, "length_filtered"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn funnel_monotonicity() {
        let f = Funnel {
            raw: Some(10),
            lexicon_filtered: Some(7),
            predicate_filtered: Some(7),
            length_filtered: Some(6),
            ..Funnel::default()
        };
        assert!(f.is_monotone());
        let g = Funnel {
            lexicon_filtered: Some(8),
            ..f.clone()
        };
        assert!(g.is_monotone());
        assert!(!Funnel { length_filtered: Some(11), ..f }.is_monotone());
    }

    #[test]
    fn empty_table_file_gives_empty_lexicon() {
        let dir = tempfile::tempdir().unwrap();
        let tables = dir.path().join("tables.jsonl");
        std::fs::write(&tables, "").unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.paths.tables = Some(tables);
        cfg.paths.output_dir = dir.path().join("out");
        let p = Pipeline::new(cfg);
        let stats = p.ingest().unwrap();
        assert_eq!((stats.tables, stats.terms), (0, 0));
        assert_eq!(std::fs::read_to_string(p.out(files::LEXICON)).unwrap(), "");
        assert!(p.out("manifests/ingest.json").exists());
    }

    #[test]
    fn missing_input_is_reported() {
        let p = Pipeline::new(PipelineConfig::default());
        assert!(matches!(p.ingest(), Err(PipelineError::MissingPath("paths.tables"))));
    }
}
