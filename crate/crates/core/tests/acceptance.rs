//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Tolerances and time budgets are pinned
//! below.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use protoform::dataset::{
    align_to_subwords, generate_synthetic_corpus, split_dataset, AnnotatedExample, DatasetError,
    FormalPropertyLabelMap, IdentifierLabelMap, ModelReadyExample, SynthConfig, VocabOptions, WordPieceTokenizer,
    OUTSIDE,
};
use protoform::model::{EncoderConfig, JointModel, LossWeights, ModelConfig, ModelVariant};
use protoform::pipeline::{files, Funnel, Pipeline, PipelineConfig};
use protoform::srt::{PredicateCatalog, SecurityCategory};
use protoform::train::{acc_fprop, acc_idf, FpMatch, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const METRIC_BATCHES: usize = 100;
const GRAD_NONZERO_MIN: f64 = 1e-6;
const FD_PARAMS: usize = 20;
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-3;
/// Denominator floor for the relative error of near-zero gradients.
const FD_ABS_FLOOR: f64 = 1e-7;
const ALIGN_EXAMPLES: usize = 1000;
const MAX_SEQ_LEN: usize = 256;
const LEARN_EPOCHS: usize = 20;
const LEARN_IDF_MIN: f64 = 0.90;
const LEARN_FPROP_MIN: f64 = 0.80;
const RANDOM_GUESS_IDF: f64 = 0.30;
const DECAY: f64 = 0.1;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn synthetic(examples: usize, seed: u64) -> (Vec<AnnotatedExample>, FormalPropertyLabelMap) {
    let corpus = generate_synthetic_corpus(&SynthConfig {
        examples,
        seed,
        ..SynthConfig::default()
    });
    (corpus.examples, corpus.fp_labels)
}

fn vocab_for(examples: &[AnnotatedExample], opts: VocabOptions) -> WordPieceTokenizer {
    WordPieceTokenizer::build(examples.iter().flat_map(|e| e.words.iter().map(String::as_str)), opts)
}

fn ready(examples: &[AnnotatedExample], tok: &WordPieceTokenizer) -> Vec<ModelReadyExample> {
    examples
        .iter()
        .map(|e| align_to_subwords(e, tok, MAX_SEQ_LEN).expect("synthetic example fits"))
        .collect()
}

fn catalog_fidelity() -> Outcome {
    use SecurityCategory::*;
    let expected: [(&str, SecurityCategory); 23] = [
        ("decode", Confidentiality),
        ("encode", Confidentiality),
        ("verify", Integrity),
        ("access", Authentication),
        ("reestablish", Authentication),
        ("count", Accounting),
        ("build", Belong),
        ("complete", Belong),
        ("append", Belong),
        ("belong", Belong),
        ("store", Belong),
        ("contain", Belong),
        ("include", Belong),
        ("combine", Belong),
        ("imply", Generation),
        ("establish", Generation),
        ("modify", Generation),
        ("denote", Generation),
        ("utilize", Generation),
        ("set", Generation),
        ("change", Generation),
        ("define", Generation),
        ("=", Generation),
    ];
    let catalog = PredicateCatalog::standard();
    let mut words: Vec<&str> = catalog.words().to_vec();
    words.sort_unstable();
    let mut want: Vec<&str> = expected.iter().map(|(w, _)| *w).collect();
    want.sort_unstable();
    let categories_ok = expected.iter().all(|&(w, c)| catalog.category(w) == Some(c));
    let mut used: Vec<SecurityCategory> = expected.iter().map(|(_, c)| *c).collect();
    used.sort_by_key(|c| c.as_str());
    used.dedup();
    let fp = FormalPropertyLabelMap::from_first_appearance(std::iter::empty::<&str>(), &catalog);
    let ok = words == want
        && categories_ok
        && used.len() == 6
        && SecurityCategory::ALL.len() == 6
        && fp.len() == 24
        && fp.name(OUTSIDE) == Some("O")
        && IdentifierLabelMap.len() == 3;
    outcome(
        ok,
        format!(
            "{} predicates, {} categories, {} formal-property labels, {} identifier labels",
            words.len(),
            used.len(),
            fp.len(),
            IdentifierLabelMap.len()
        ),
    )
}

fn brute_force_idf(pred: &[Vec<usize>], gold: &[Vec<Option<usize>>]) -> f64 {
    let (mut hit, mut total) = (0u32, 0u32);
    for i in 0..pred.len() {
        for j in 0..pred[i].len() {
            if let Some(g) = gold[i][j] {
                total += 1;
                if pred[i][j] == g {
                    hit += 1;
                }
            }
        }
    }
    f64::from(hit) / f64::from(total)
}

fn brute_force_fprop(pred: &[Vec<usize>], gold: &[Vec<Option<usize>>]) -> f64 {
    let mut hit = 0u32;
    for i in 0..pred.len() {
        let mut first = None;
        for j in 0..gold[i].len() {
            if first.is_none() && matches!(gold[i][j], Some(g) if g != 0) {
                first = Some(j);
            }
        }
        let j = first.expect("generated with a relation");
        if Some(pred[i][j]) == gold[i][j] {
            hit += 1;
        }
    }
    f64::from(hit) / pred.len() as f64
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..METRIC_BATCHES {
        let batch = rng.random_range(1..=16);
        let mut pi = Vec::new();
        let mut gi = Vec::new();
        let mut pf = Vec::new();
        let mut gf = Vec::new();
        for _ in 0..batch {
            let len = rng.random_range(1..=50);
            let rel = rng.random_range(0..len);
            let mut gold_i: Vec<Option<usize>> = (0..len).map(|_| Some(rng.random_range(0..3))).collect();
            let mut gold_f: Vec<Option<usize>> = (0..len).map(|_| Some(0)).collect();
            for j in 0..len {
                if j != rel && rng.random_bool(0.2) {
                    gold_i[j] = None;
                    gold_f[j] = None;
                }
            }
            gold_i[rel] = Some(0);
            gold_f[rel] = Some(rng.random_range(1..24));
            pi.push((0..len).map(|_| rng.random_range(0..3)).collect::<Vec<_>>());
            let mut p: Vec<usize> = (0..len).map(|_| rng.random_range(0..24)).collect();
            if rng.random_bool(0.5) {
                p[rel] = gold_f[rel].unwrap();
            }
            pf.push(p);
            gi.push(gold_i);
            gf.push(gold_f);
        }
        let idf = acc_idf(&pi, &gi).expect("scorable batch");
        let fprop = acc_fprop(&pf, &gf, FpMatch::RelationPosition).expect("valid batch");
        if idf != brute_force_idf(&pi, &gi) || fprop != brute_force_fprop(&pf, &gf) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{METRIC_BATCHES} random batches, {mismatches} mismatches"))
}

fn tiny_model(variant: ModelVariant, vocab: usize, seed: u64) -> JointModel<f64> {
    JointModel::new(ModelConfig::new(EncoderConfig::tiny(vocab), variant), seed).expect("tiny config is valid")
}

fn gradient_separation() -> Outcome {
    let (examples, _) = synthetic(8, 5);
    let tok = vocab_for(&examples, VocabOptions::default());
    let data = ready(&examples, &tok);
    let example = &data[0];
    let mut lines = Vec::new();
    let mut ok = true;

    for variant in ModelVariant::ALL {
        let model = tiny_model(variant, tok.vocab_size(), 11);
        let (_, grads) = model
            .loss_and_gradients(example, LossWeights::formal_property_only(), None)
            .expect("example is scorable");
        let max = model
            .identifier_head_params()
            .iter()
            .map(|&id| grads.max_abs(id))
            .fold(0.0f64, f64::max);
        let sep_ok = match variant {
            ModelVariant::Disjoint => max == 0.0,
            _ => max > GRAD_NONZERO_MIN,
        };
        ok &= sep_ok;

        let (_, full) = model
            .loss_and_gradients(example, LossWeights::default(), None)
            .expect("example is scorable");
        let ids: Vec<_> = model.params().ids().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(77 + variant as u64);
        let mut worst = 0.0f64;
        for _ in 0..FD_PARAMS {
            let id = ids[rng.random_range(0..ids.len())];
            let k = rng.random_range(0..model.params().value(id).data().len());
            let loss_at = |delta: f64| {
                let mut m = model.clone();
                m.params_mut().value_mut(id).data_mut()[k] += delta;
                m.loss_and_gradients(example, LossWeights::default(), None).unwrap().0.total
            };
            let numeric = (loss_at(FD_STEP) - loss_at(-FD_STEP)) / (2.0 * FD_STEP);
            let analytic = full.entry(id, k);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_ABS_FLOOR);
            worst = worst.max(rel);
        }
        ok &= worst <= FD_REL_TOL;
        lines.push(format!("{variant}: max|dL_fp/d idf-head| = {max:.3e}, worst FD rel err = {worst:.2e}"));
    }
    outcome(ok, lines.join("; "))
}

fn alignment_round_trip() -> Outcome {
    let corpus = generate_synthetic_corpus(&SynthConfig {
        examples: ALIGN_EXAMPLES,
        seed: 99,
        min_words: 4,
        max_words: 180,
        distractor_rate: 0.3,
        ..SynthConfig::default()
    });
    // A small vocabulary forces most identifiers into several pieces.
    let tok = vocab_for(
        &corpus.examples,
        VocabOptions {
            min_frequency: 4,
            max_entries: 150,
        },
    );
    let (mut exact, mut rejected, mut failures, mut longest, mut split_words) = (0, 0, 0, 0, 0);
    for e in &corpus.examples {
        match align_to_subwords(e, &tok, MAX_SEQ_LEN) {
            Ok(r) => {
                longest = longest.max(r.len());
                split_words += r.word_spans.iter().filter(|s| s.len() > 1).count();
                let (idf, fp) = r.word_labels();
                let contiguous = r.word_spans.windows(2).all(|w| w[0].end == w[1].start)
                    && r.word_spans.first().is_some_and(|s| s.start == 1)
                    && r.word_spans.last().is_some_and(|s| s.end == r.len() - 1);
                if r.len() <= MAX_SEQ_LEN && idf == e.identifier_labels && fp == e.fp_labels && contiguous {
                    exact += 1;
                } else {
                    failures += 1;
                }
            }
            Err(DatasetError::TooLong { len, max, .. }) if len > max => rejected += 1,
            Err(_) => failures += 1,
        }
    }
    outcome(
        failures == 0 && exact + rejected == ALIGN_EXAMPLES && exact > 0 && split_words > 0,
        format!(
            "{exact} exact, {rejected} rejected as too long, {failures} failures, longest {longest} subwords, {split_words} multi-piece words"
        ),
    )
}

fn funnel_correctness() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut cfg = PipelineConfig::load(&fixtures().join("pipeline.toml")).expect("fixture config");
    cfg.paths.output_dir = dir.path().to_path_buf();
    let p = Pipeline::new(cfg);
    let run = p.ingest().and_then(|_| p.extract()).and_then(|_| p.build_dataset());
    if let Err(e) = run {
        return outcome(false, format!("pipeline failed: {e}"));
    }
    let funnel = p.report().expect("stats present");
    let golden: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("golden/funnel.json")).unwrap()).unwrap();
    let g = |k: &str| golden[k].as_u64().map(|v| v as usize);
    let want = Funnel {
        tables: g("tables"),
        terms: g("terms"),
        raw: g("raw"),
        lexicon_filtered: g("lexicon_filtered"),
        predicate_filtered: g("predicate_filtered"),
        length_filtered: g("length_filtered"),
    };
    let lexicon_ok = std::fs::read_to_string(p.out(files::LEXICON)).ok()
        == std::fs::read_to_string(fixtures().join("golden/lexicon.txt")).ok();
    outcome(
        funnel == want && funnel.is_monotone() && lexicon_ok,
        format!(
            "terms {:?}, raw {:?} -> lexicon {:?} -> predicate {:?} -> length {:?}",
            funnel.terms, funnel.raw, funnel.lexicon_filtered, funnel.predicate_filtered, funnel.length_filtered
        ),
    )
}

fn learnability() -> Outcome {
    let (examples, _) = synthetic(500, SynthConfig::default().seed);
    let tok = vocab_for(&examples, VocabOptions::default());
    let (train_set, valid_set) = split_dataset(&ready(&examples, &tok), 0.2, 13).expect("split");
    let cfg = TrainConfig {
        epochs: LEARN_EPOCHS,
        parallel: false,
        ..TrainConfig::tiny()
    };
    let model_cfg = ModelConfig::new(EncoderConfig::tiny(tok.vocab_size()), ModelVariant::Joint2);
    let run = || protoform::train::train::<f32>(model_cfg.clone(), &train_set, &valid_set, &cfg).expect("training runs");
    let (_, history) = run();
    let (_, again) = run();
    let last = history.last().expect("epochs ran");
    let deterministic = history == again;
    outcome(
        history.len() == LEARN_EPOCHS
            && last.train_idf >= LEARN_IDF_MIN
            && last.train_fprop >= LEARN_FPROP_MIN
            && last.train_idf > RANDOM_GUESS_IDF
            && deterministic,
        format!(
            "epoch {}: train acc_idf {:.4}, acc_fprop {:.4} (valid {:.4} / {:.4}), rerun identical: {deterministic}",
            last.epoch, last.train_idf, last.train_fprop, last.valid_idf, last.valid_fprop
        ),
    )
}

fn regularization_exemption() -> Outcome {
    let model = tiny_model(ModelVariant::Joint2, 64, 3);
    let trainer = Trainer::new(model, TrainConfig::tiny()).expect("valid config");
    let (mut exempt, mut decayed, mut wrong) = (0, 0, Vec::new());
    for (id, p) in trainer.model().params().iter() {
        let want = if ["bias", "ln_1", "ln_2"].iter().any(|s| p.name.contains(s)) {
            0.0
        } else {
            DECAY
        };
        let got = trainer.optimizer().weight_decay(id);
        if got != want {
            wrong.push(p.name.clone());
        } else if got == 0.0 {
            exempt += 1;
        } else {
            decayed += 1;
        }
    }
    outcome(
        wrong.is_empty() && exempt > 0 && decayed > 0,
        format!("{decayed} decayed at {DECAY}, {exempt} exempt, mismatched: {wrong:?}"),
    )
}

fn runbook_documented() -> Outcome {
    let readme = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    let text = std::fs::read_to_string(readme).unwrap_or_default();
    let ok = text.contains("## Runbook") && text.contains("protoform ingest") && text.contains("protoform report");
    outcome(
        ok,
        "real-corpus numbers are not reproducible without the licensed source document; README runbook present",
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome, Duration);
    let criteria: [Criterion; 8] = [
        ("1 catalog fidelity", catalog_fidelity, Duration::from_secs(1)),
        ("2 metric oracle", metric_oracle, Duration::from_secs(10)),
        ("3 gradient separation", gradient_separation, Duration::from_secs(30)),
        ("4 alignment round trip", alignment_round_trip, Duration::from_secs(30)),
        ("5 funnel correctness", funnel_correctness, Duration::from_secs(10)),
        ("6 desk-scale learnability", learnability, Duration::from_secs(600)),
        ("7 regularization exemption", regularization_exemption, Duration::from_secs(5)),
        ("8 desk-scale limits documented", runbook_documented, Duration::from_secs(1)),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let passed = result.passed && elapsed <= budget;
        failed += usize::from(!passed);
        println!(
            "[{}] {name}: {} ({:.2}s, budget {}s)",
            if passed { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
