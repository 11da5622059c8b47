//! Seeded synthetic corpus with a learnable identifier pattern.
//!
//! Identifiers are camel-case compounds of protocol-flavoured pieces, filler
//! words are lowercase, and each sentence carries exactly one
//! subject–predicate–object group. Predicate counts are apportioned from the
//! configured weights (largest remainder), so proportions hold exactly up to
//! rounding rather than up to sampling noise.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::labels::FormalPropertyLabelMap;
use crate::dataset::{annotate, AnnotatedExample};
use crate::srt::lemma::predicate_forms;
use crate::srt::{PredicateCatalog, Span, SrtTriple, TripleSpans};

const HEAD_PIECES: &[&str] = &[
    "RRC", "meas", "srb", "drb", "pdcch", "pucch", "pusch", "cell", "SIB", "UE", "bwp", "csi", "ssb", "nzp", "tdd",
    "sCell", "spCell", "sl", "rlc", "pdcp", "mac", "phy", "NR", "EUTRA", "t", "n", "k", "ra", "beam", "lbt",
];

const TAIL_PIECES: &[&str] = &[
    "Config", "Setup", "Group", "Info", "Id", "Report", "Timer", "Resource", "List", "Index", "Mode", "Request",
    "Release", "Capability", "Type", "Offset", "Dedicated", "Common", "Master", "Secondary", "Reconfiguration",
    "Parameters", "Window", "Threshold", "Bearer", "Key", "Counter", "Space", "Occasion", "Periodicity",
];

/// Lowercase filler words; none is a catalog predicate or one of its forms.
const FILLER: &[&str] = &[
    "the", "a", "when", "if", "upon", "network", "shall", "this", "field", "value", "procedure", "receiving",
    "message", "is", "configured", "for", "each", "of", "in", "to", "and", "which", "after", "before", "that", "be",
    "then", "only", "also", "with", "not", "present", "otherwise", "corresponding", "serving", "current", "other",
    "specified", "as", "clause", "indicated", "by", "on", "any", "entity", "lower", "layers", "upper", "absent",
    "optional", "mandatory", "initiate", "perform", "apply", "release", "consider", "transmission", "reception",
    "or", "where", "applicable", "same", "following", "it", "from", "at", "its", "new",
];

/// Adverbs that may sit between subject and predicate.
const ADVERBS: &[&str] = &["also", "only", "then", "further"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub examples: usize,
    pub seed: u64,
    /// Number of distinct identifiers to draw from.
    pub identifier_vocab: usize,
    /// Relative predicate frequencies, keyed by catalog lemma.
    pub predicate_weights: BTreeMap<String, f64>,
    /// Inclusive range of sentence lengths in words.
    pub min_words: usize,
    pub max_words: usize,
    /// Probability of an extra, unlabeled identifier in the sentence tail.
    pub distractor_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            examples: 500,
            seed: 1,
            identifier_vocab: 120,
            predicate_weights: Self::default_weights(),
            min_words: 8,
            max_words: 24,
            distractor_rate: 0.0,
        }
    }
}

impl SynthConfig {
    /// `include : contain : utilize = 620 : 327 : 10`, every other predicate
    /// weighted like `utilize`.
    pub fn default_weights() -> BTreeMap<String, f64> {
        let mut weights: BTreeMap<String, f64> = PredicateCatalog::standard()
            .words()
            .iter()
            .map(|w| (w.to_string(), 10.0))
            .collect();
        weights.insert("include".into(), 620.0);
        weights.insert("contain".into(), 327.0);
        weights
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub triples: Vec<SrtTriple>,
    pub examples: Vec<AnnotatedExample>,
    pub fp_labels: FormalPropertyLabelMap,
}

/// Largest-remainder apportionment of `total` over `weights`, ties broken by
/// key order. Non-positive weights get zero.
pub fn apportion(weights: &BTreeMap<String, f64>, total: usize) -> BTreeMap<String, usize> {
    let sum: f64 = weights.values().filter(|w| **w > 0.0).sum();
    if sum <= 0.0 || total == 0 {
        return weights.keys().map(|k| (k.clone(), 0)).collect();
    }
    let mut counts = BTreeMap::new();
    let mut remainders = Vec::new();
    let mut assigned = 0;
    for (k, &w) in weights {
        let quota = if w > 0.0 { total as f64 * w / sum } else { 0.0 };
        let base = quota.floor() as usize;
        assigned += base;
        counts.insert(k.clone(), base);
        remainders.push((quota - base as f64, k.clone()));
    }
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    for (_, k) in remainders.into_iter().take(total - assigned) {
        *counts.get_mut(&k).expect("key present") += 1;
    }
    counts
}

fn identifier_pool(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    let filler: BTreeSet<&str> = FILLER.iter().copied().collect();
    let mut pool = BTreeSet::new();
    let capacity = HEAD_PIECES.len() * TAIL_PIECES.len() * (TAIL_PIECES.len() + 1);
    let size = size.min(capacity);
    while pool.len() < size {
        let head = *HEAD_PIECES.choose(rng).expect("non-empty");
        let mut name = head.to_string();
        let tails = rng.random_range(1..=2);
        for _ in 0..tails {
            name.push_str(TAIL_PIECES.choose(rng).expect("non-empty"));
        }
        if !filler.contains(name.as_str()) {
            pool.insert(name);
        }
    }
    let mut pool: Vec<String> = pool.into_iter().collect();
    pool.shuffle(rng);
    pool
}

fn surface_form(rng: &mut ChaCha8Rng, lemma: &str) -> Vec<String> {
    let Some(forms) = predicate_forms(lemma).filter(|f| !f.is_empty()) else {
        return vec![lemma.to_string()];
    };
    let past = if lemma == "set" { "set" } else { forms[1] };
    match rng.random_range(0..10) {
        0..=5 => vec![forms[0].to_string()],
        6..=7 => vec![past.to_string()],
        _ => vec!["shall".to_string(), lemma.to_string()],
    }
}

/// Generates `cfg.examples` annotated examples; identical seeds give
/// identical corpora.
pub fn generate_synthetic_corpus(cfg: &SynthConfig) -> SyntheticCorpus {
    let catalog = PredicateCatalog::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let identifiers = identifier_pool(&mut rng, cfg.identifier_vocab.max(2));

    let weights: BTreeMap<String, f64> = cfg
        .predicate_weights
        .iter()
        .filter(|(k, _)| catalog.contains(k))
        .map(|(k, &v)| (k.clone(), v))
        .collect();
    let mut lemmas: Vec<String> = apportion(&weights, cfg.examples)
        .into_iter()
        .flat_map(|(k, n)| std::iter::repeat_n(k, n))
        .collect();
    lemmas.shuffle(&mut rng);

    let min_words = cfg.min_words.max(6);
    let max_words = cfg.max_words.max(min_words);
    let mut triples = Vec::with_capacity(lemmas.len());
    for (index, lemma) in lemmas.iter().enumerate() {
        let source = identifiers.choose(&mut rng).expect("pool").clone();
        let target = loop {
            let t = identifiers.choose(&mut rng).expect("pool");
            if *t != source {
                break t.clone();
            }
        };
        let mut core: Vec<String> = vec![source.clone()];
        if rng.random_bool(0.2) {
            core.push(ADVERBS.choose(&mut rng).expect("non-empty").to_string());
        }
        let verb = surface_form(&mut rng, lemma);
        let relation_offset = core.len() + verb.len() - 1;
        core.extend(verb);
        if rng.random_bool(0.6) {
            core.push("the".into());
        }
        core.push(target.clone());

        let length = rng.random_range(min_words..=max_words).max(core.len());
        let spare = length - core.len();
        let prefix = rng.random_range(0..=spare);
        let mut tokens: Vec<String> = (0..prefix)
            .map(|_| FILLER.choose(&mut rng).expect("non-empty").to_string())
            .collect();
        tokens.extend(core.iter().cloned());
        for _ in 0..spare - prefix {
            let word = if rng.random_bool(cfg.distractor_rate.clamp(0.0, 1.0)) {
                identifiers.choose(&mut rng).expect("pool").clone()
            } else {
                FILLER.choose(&mut rng).expect("non-empty").to_string()
            };
            tokens.push(word);
        }

        let source_at = prefix;
        let relation_at = prefix + relation_offset;
        let target_at = prefix + core.len() - 1;
        triples.push(SrtTriple {
            sentence_id: format!("synth-{index:05}"),
            source,
            relation: tokens[relation_at].clone(),
            lemma: lemma.clone(),
            target,
            sentence: tokens.join(" "),
            tokens,
            spans: TripleSpans {
                source: Span::single(source_at),
                relation: Span::single(relation_at),
                target: Span::single(target_at),
            },
        });
    }

    let fp_labels = FormalPropertyLabelMap::from_first_appearance(triples.iter().map(|t| t.lemma.as_str()), &catalog);
    let examples = triples
        .iter()
        .map(|t| annotate(t, &fp_labels).expect("generated triples are well formed"))
        .collect();
    SyntheticCorpus {
        triples,
        examples,
        fp_labels,
    }
}
