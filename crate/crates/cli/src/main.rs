//! `protoform` command-line driver.
//!
//! Every subcommand runs one pipeline stage against `--output-dir`, prints a
//! JSON summary on stdout and writes `manifests/<stage>.json`. Failures print
//! `{"error": <kind>, "message": <text>}` on stderr and exit with status 1.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use protoform::model::ModelVariant;
use protoform::pipeline::config::BackendKind;
use protoform::pipeline::{EvalSplit, ExportSource, Pipeline, PipelineConfig, PipelineError};
use protoform::export::TableFormat;
use protoform::train::FpMatch;
use serde_json::json;

#[derive(Parser)]
#[command(name = "protoform", version, about = "Identifier and formal-property extraction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Build the terminology lexicon from the table file.
    Ingest,
    /// Parse sentences and extract filtered SRT triples.
    Extract,
    /// Annotate triples, build the vocabulary and split the dataset.
    BuildDataset,
    /// Train the joint model.
    Train,
    /// Evaluate the trained model on a split.
    Eval {
        #[arg(long, default_value = "valid", value_parser = parse_from_str::<EvalSplit>)]
        split: EvalSplit,
    },
    /// Write the identifier / formal-property dependency table.
    Export,
    /// Print the stage funnel counts.
    Report,
    /// Generate the synthetic corpus and build a dataset from it.
    Synth,
}

/// Flags that override fields of the configuration file.
#[derive(Args)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    tables: Option<PathBuf>,
    #[arg(long, global = true)]
    sentences: Option<PathBuf>,
    /// Pre-parsed dependency file for the fixture backend.
    #[arg(long, global = true)]
    parsed: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_serde::<BackendKind>)]
    backend: Option<BackendKind>,
    /// Parser server URL; the PROTOFORM_PARSER_ENDPOINT variable takes precedence.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    #[arg(long, global = true)]
    max_words: Option<usize>,
    #[arg(long, global = true)]
    max_seq_len: Option<usize>,
    #[arg(long, global = true)]
    valid_fraction: Option<f64>,
    #[arg(long, global = true)]
    split_seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_from_str::<ModelVariant>)]
    variant: Option<ModelVariant>,
    /// Use the small randomly initialized encoder and its training preset.
    #[arg(long, global = true)]
    tiny: bool,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    weight_decay: Option<f64>,
    /// Training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_serde::<FpMatch>)]
    fp_match: Option<FpMatch>,
    /// Compute per-example gradients on all cores.
    #[arg(long, global = true)]
    parallel: bool,
    #[arg(long, global = true)]
    synth_examples: Option<usize>,
    #[arg(long, global = true)]
    synth_seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_from_str::<TableFormat>)]
    format: Option<TableFormat>,
    #[arg(long, global = true, value_parser = parse_serde::<ExportSource>)]
    source: Option<ExportSource>,
}

fn parse_from_str<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

fn parse_serde<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl Overrides {
    fn resolve(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        let p = &mut cfg.paths;
        set(&mut p.output_dir, self.output_dir.clone());
        set_opt(&mut p.tables, self.tables.clone());
        set_opt(&mut p.sentences, self.sentences.clone());
        set_opt(&mut p.parsed, self.parsed.clone());
        set(&mut cfg.backend.kind, self.backend);
        set(&mut cfg.backend.endpoint, self.endpoint.clone());
        let d = &mut cfg.dataset;
        set(&mut d.max_words, self.max_words);
        set(&mut d.max_seq_len, self.max_seq_len);
        set(&mut d.valid_fraction, self.valid_fraction);
        set(&mut d.seed, self.split_seed);
        set(&mut cfg.model.variant, self.variant);
        cfg.model.tiny |= self.tiny;
        let t = &mut cfg.train;
        set_opt(&mut t.epochs, self.epochs);
        set_opt(&mut t.learning_rate, self.lr);
        set_opt(&mut t.batch_size, self.batch_size);
        set_opt(&mut t.weight_decay, self.weight_decay);
        set_opt(&mut t.seed, self.seed);
        set_opt(&mut t.fp_match, self.fp_match);
        if self.parallel {
            t.parallel = Some(true);
        }
        set(&mut cfg.synth.examples, self.synth_examples);
        set(&mut cfg.synth.seed, self.synth_seed);
        set(&mut cfg.export.format, self.format);
        set(&mut cfg.export.source, self.source);
        Ok(cfg)
    }
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

fn set_opt<T>(field: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *field = value;
    }
}

fn run(cli: &Cli) -> Result<serde_json::Value, PipelineError> {
    let pipeline = Pipeline::new(cli.overrides.resolve()?);
    let value = match &cli.command {
        Command::Ingest => json!(pipeline.ingest()?),
        Command::Extract => json!(pipeline.extract()?),
        Command::BuildDataset => json!(pipeline.build_dataset()?),
        Command::Train => json!(pipeline.train()?),
        Command::Eval { split } => json!(pipeline.eval(*split)?),
        Command::Export => json!(pipeline.export()?),
        Command::Report => json!(pipeline.report()?),
        Command::Synth => json!(pipeline.synth()?),
    };
    Ok(value)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
