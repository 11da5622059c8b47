//! Pipeline configuration, read from TOML.
//!
//! Relative paths are resolved against the directory of the config file.
//! Every section is optional; omitted keys take the documented defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dataset::{SynthConfig, DEFAULT_MAX_SEQ_LEN, DEFAULT_MAX_WORDS};
use crate::export::TableFormat;
use crate::ingest::{CellSplit, FilterConfig, Normalize};
use crate::model::{Activation, EncoderConfig, ModelConfig, ModelVariant};
use crate::srt::parse::{CommandBackend, CoreNlpBackend, FixtureBackend, ParserBackend};
use crate::srt::ExtractConfig;
use crate::train::{FpMatch, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub filter: FilterSettings,
    pub backend: BackendSettings,
    pub extract: ExtractConfig,
    pub dataset: DatasetSettings,
    pub model: ModelSettings,
    pub train: TrainOverrides,
    pub synth: SynthConfig,
    pub export: ExportSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Extracted tables, one JSON object per line.
    pub tables: Option<PathBuf>,
    /// Raw sentences, one `{"id", "text"}` object per line.
    pub sentences: Option<PathBuf>,
    /// Pre-parsed sentences for the fixture backend.
    pub parsed: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            tables: None,
            sentences: None,
            parsed: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSettings {
    /// Inline stop list; `None` with no file means the built-in English list.
    pub stop_list: Option<Vec<String>>,
    /// One stop word per line; merged with `stop_list`.
    pub stop_list_file: Option<PathBuf>,
    pub domain_exclude_list: Vec<String>,
    pub domain_exclude_file: Option<PathBuf>,
    pub casefold: bool,
    pub strip_punctuation: bool,
    pub cell_split: CellSplit,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            stop_list: None,
            stop_list_file: None,
            domain_exclude_list: Vec::new(),
            domain_exclude_file: None,
            casefold: true,
            strip_punctuation: true,
            cell_split: CellSplit::Whitespace,
        }
    }
}

fn read_word_list(path: &Path) -> Result<Vec<String>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

impl FilterSettings {
    pub fn resolve(&self) -> Result<FilterConfig, PipelineError> {
        let normalize = Normalize {
            casefold: self.casefold,
            strip_punctuation: self.strip_punctuation,
        };
        let mut stop: Vec<String> = match (&self.stop_list, &self.stop_list_file) {
            (None, None) => stop_words::get("en").iter().map(|s| s.to_string()).collect(),
            (inline, _) => inline.clone().unwrap_or_default(),
        };
        if let Some(path) = &self.stop_list_file {
            stop.extend(read_word_list(path)?);
        }
        let mut exclude = self.domain_exclude_list.clone();
        if let Some(path) = &self.domain_exclude_file {
            exclude.extend(read_word_list(path)?);
        }
        let mut cfg = FilterConfig::new(stop, exclude, normalize);
        cfg.cell_split = self.cell_split;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Fixture,
    Command,
    Corenlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub kind: BackendKind,
    /// CoreNLP server URL; the endpoint environment variable wins when set.
    pub endpoint: String,
    pub program: Option<String>,
    pub args: Vec<String>,
}

impl Default for BackendSettings {
    fn default() -> Self {
        Self {
            kind: BackendKind::Fixture,
            endpoint: "http://localhost:9000".into(),
            program: None,
            args: Vec::new(),
        }
    }
}

impl BackendSettings {
    pub fn build(&self, paths: &Paths) -> Result<Box<dyn ParserBackend>, PipelineError> {
        Ok(match self.kind {
            BackendKind::Fixture => {
                let parsed = paths.parsed.as_ref().ok_or(PipelineError::MissingPath("paths.parsed"))?;
                Box::new(FixtureBackend::from_file(parsed)?)
            }
            BackendKind::Command => Box::new(CommandBackend {
                program: self
                    .program
                    .clone()
                    .ok_or_else(|| PipelineError::Config("backend.program is required for the command backend".into()))?,
                args: self.args.clone(),
            }),
            BackendKind::Corenlp => Box::new(CoreNlpBackend::from_env_or(&self.endpoint)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSettings {
    pub max_words: usize,
    pub max_seq_len: usize,
    pub valid_fraction: f64,
    pub seed: u64,
    /// Existing `vocab.txt`; when absent one is derived from the dataset.
    pub vocab: Option<PathBuf>,
    pub min_frequency: usize,
    pub max_vocab_entries: usize,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        Self {
            max_words: DEFAULT_MAX_WORDS,
            max_seq_len: DEFAULT_MAX_SEQ_LEN,
            valid_fraction: 0.2,
            seed: 13,
            vocab: None,
            min_frequency: 1,
            max_vocab_entries: 30_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub variant: ModelVariant,
    /// Two layers, 32 dimensions, random initialization.
    pub tiny: bool,
    pub num_layers: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub num_heads: Option<usize>,
    pub intermediate_dim: Option<usize>,
    pub dropout: Option<f64>,
    pub freeze_encoder: bool,
    pub pretrained_checkpoint_name: Option<String>,
    pub head_activation: Activation,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            variant: ModelVariant::Joint2,
            tiny: false,
            num_layers: None,
            hidden_dim: None,
            num_heads: None,
            intermediate_dim: None,
            dropout: None,
            freeze_encoder: false,
            pretrained_checkpoint_name: None,
            head_activation: Activation::Gelu,
        }
    }
}

impl ModelSettings {
    pub fn model_config(&self, vocab_size: usize, max_seq_len: usize) -> ModelConfig {
        let mut enc = if self.tiny {
            EncoderConfig::tiny(vocab_size)
        } else {
            EncoderConfig::bert_base(vocab_size)
        };
        enc.max_seq_len = max_seq_len;
        enc.num_layers = self.num_layers.unwrap_or(enc.num_layers);
        enc.hidden_dim = self.hidden_dim.unwrap_or(enc.hidden_dim);
        enc.num_heads = self.num_heads.unwrap_or(enc.num_heads);
        enc.intermediate_dim = self.intermediate_dim.unwrap_or(enc.intermediate_dim);
        enc.dropout = self.dropout.unwrap_or(enc.dropout);
        enc.freeze_encoder = self.freeze_encoder;
        if let Some(name) = &self.pretrained_checkpoint_name {
            enc.pretrained_checkpoint_name = name.clone();
        }
        ModelConfig {
            encoder: enc,
            variant: self.variant,
            head_activation: self.head_activation,
        }
    }
}

/// Training keys that replace the preset (`TrainConfig::tiny` for tiny
/// models, `TrainConfig::default` otherwise).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub variant_epochs: Option<BTreeMap<ModelVariant, usize>>,
    pub weight_decay: Option<f64>,
    pub no_regularization_names: Option<Vec<String>>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub fp_match: Option<FpMatch>,
    pub identifier_loss_weight: Option<f64>,
    pub fp_loss_weight: Option<f64>,
    pub parallel: Option<bool>,
}

impl TrainOverrides {
    pub fn resolve(&self, tiny: bool) -> TrainConfig {
        let mut cfg = if tiny { TrainConfig::tiny() } else { TrainConfig::default() };
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
            // an explicit epoch count applies to every variant
            cfg.variant_epochs.clear();
        }
        if let Some(v) = &self.variant_epochs {
            cfg.variant_epochs = v.clone();
        }
        if let Some(v) = self.weight_decay {
            cfg.weight_decay = v;
        }
        if let Some(v) = &self.no_regularization_names {
            cfg.no_regularization_names = v.clone();
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.fp_match {
            cfg.fp_match = v;
        }
        if let Some(v) = self.identifier_loss_weight {
            cfg.loss_weights.identifier = v;
        }
        if let Some(v) = self.fp_loss_weight {
            cfg.loss_weights.formal_property = v;
        }
        if let Some(v) = self.parallel {
            cfg.parallel = v;
        }
        cfg
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportSource {
    #[default]
    Gold,
    Predictions,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSettings {
    pub format: TableFormat,
    pub source: ExportSource,
}

fn rebase(path: &mut PathBuf, base: &Path) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Parses `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let p = &mut self.paths;
        for path in [&mut p.tables, &mut p.sentences, &mut p.parsed].into_iter().flatten() {
            rebase(path, base);
        }
        rebase(&mut p.output_dir, base);
        let f = &mut self.filter;
        for path in [&mut f.stop_list_file, &mut f.domain_exclude_file].into_iter().flatten() {
            rebase(path, base);
        }
        if let Some(v) = &mut self.dataset.vocab {
            rebase(v, base);
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.resolve(self.model.tiny)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg = PipelineConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.dataset.max_words, 200);
        assert_eq!(cfg.dataset.max_seq_len, 256);
        assert_eq!(cfg.train_config(), TrainConfig::default());
    }

    #[test]
    fn sections_and_relative_paths() {
        let text = r#"
            [paths]
            tables = "fixtures/tables.jsonl"
            output_dir = "/tmp/run"
            [model]
            variant = "joint1"
            tiny = true
            [train]
            epochs = 3
            seed = 9
        "#;
        let mut cfg = PipelineConfig::from_toml_str(text).unwrap();
        cfg.rebase(Path::new("/data"));
        assert_eq!(cfg.paths.tables.as_deref(), Some(Path::new("/data/fixtures/tables.jsonl")));
        assert_eq!(cfg.paths.output_dir, PathBuf::from("/tmp/run"));
        let t = cfg.train_config();
        assert_eq!((t.epochs_for(ModelVariant::Joint1), t.seed, t.learning_rate), (3, 9, 3e-3));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            PipelineConfig::from_toml_str("[paths]\ntabels = \"x\""),
            Err(PipelineError::Config(_))
        ));
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.filter.stop_list = Some(vec!["the".into()]);
        cfg.train.learning_rate = Some(5e-4);
        assert_eq!(PipelineConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }

    #[test]
    fn inline_stop_list_replaces_builtin() {
        let s = FilterSettings {
            stop_list: Some(vec!["The".into(), "of".into()]),
            ..FilterSettings::default()
        };
        let f = s.resolve().unwrap();
        assert_eq!(f.stop_list.len(), 2);
        assert!(f.stop_list.contains("the"));
        assert!(FilterSettings::default().resolve().unwrap().stop_list.len() > 100);
    }
}
