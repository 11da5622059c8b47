//! Bidirectional transformer encoder with an identifier head and a
//! formal-property head, wired as one of three variants.
//!
//! * `Disjoint`: both heads read the hidden states independently.
//! * `Joint1`: the formal-property head reads only the identifier logits.
//! * `Joint2`: the formal-property head reads hidden states concatenated
//!   with the identifier logits (width `hidden_dim + 3`).
//!
//! Joint variants consume the raw identifier logits, before any argmax, so
//! the formal-property loss reaches the identifier head.

pub mod autograd;
pub mod io;
pub mod params;
pub mod tensor;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::labels::{FormalPropertyLabelMap, IdentifierLabelMap};
use crate::dataset::ModelReadyExample;
use crate::scalar::Scalar;
pub use autograd::{Activation, Graph, Var};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Matrix;

pub const IDENTIFIER_CLASSES: usize = IdentifierLabelMap::LEN;
pub const FP_CLASSES: usize = FormalPropertyLabelMap::LEN;

/// Per-position encoder output, `sequence length × hidden_dim`.
pub type HiddenStates<T> = Matrix<T>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("sequence of {len} subwords exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("token id {id} outside vocabulary of {vocab}")]
    UnknownToken { id: u32, vocab: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no scorable positions")]
    AllIgnored,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("model artifact error: {0}")]
    Artifact(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    Disjoint,
    Joint1,
    #[default]
    Joint2,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] = [ModelVariant::Disjoint, ModelVariant::Joint1, ModelVariant::Joint2];

    /// Input width of the formal-property head.
    pub fn fp_input_width(self, hidden_dim: usize) -> usize {
        match self {
            ModelVariant::Disjoint => hidden_dim,
            ModelVariant::Joint1 => IDENTIFIER_CLASSES,
            ModelVariant::Joint2 => hidden_dim + IDENTIFIER_CLASSES,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::Disjoint => "disjoint",
            ModelVariant::Joint1 => "joint1",
            ModelVariant::Joint2 => "joint2",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variant `{s}` (expected disjoint, joint1 or joint2)"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub intermediate_dim: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    pub pretrained_checkpoint_name: String,
    pub freeze_encoder: bool,
    pub dropout: f64,
    pub activation: Activation,
    pub layer_norm_eps: f64,
    pub init_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::bert_base(28_996)
    }
}

impl EncoderConfig {
    /// `bert-base-cased` geometry.
    pub fn bert_base(vocab_size: usize) -> Self {
        Self {
            num_layers: 12,
            hidden_dim: 768,
            num_heads: 12,
            intermediate_dim: 3072,
            max_seq_len: 256,
            vocab_size,
            pretrained_checkpoint_name: "bert-base-cased".into(),
            freeze_encoder: false,
            dropout: 0.1,
            activation: Activation::Gelu,
            layer_norm_eps: 1e-12,
            init_std: 0.02,
        }
    }

    /// Two layers, 32 dimensions, randomly initialized.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            num_layers: 2,
            hidden_dim: 32,
            num_heads: 2,
            intermediate_dim: 64,
            pretrained_checkpoint_name: "tiny-random".into(),
            dropout: 0.0,
            layer_norm_eps: 1e-5,
            ..Self::bert_base(vocab_size)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.hidden_dim == 0 || self.num_layers == 0 || self.num_heads == 0 {
            return bad("hidden_dim, num_layers and num_heads must be positive");
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return bad("hidden_dim must be divisible by num_heads");
        }
        if self.vocab_size == 0 || self.max_seq_len == 0 || self.intermediate_dim == 0 {
            return bad("vocab_size, max_seq_len and intermediate_dim must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub variant: ModelVariant,
    /// Nonlinearity between the two layers of each head.
    #[serde(default)]
    pub head_activation: Activation,
}

impl ModelConfig {
    pub fn new(encoder: EncoderConfig, variant: ModelVariant) -> Self {
        Self {
            encoder,
            variant,
            head_activation: Activation::Gelu,
        }
    }
}

/// Weights of the loss terms. The default sums both with weight 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub identifier: f64,
    pub formal_property: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            identifier: 1.0,
            formal_property: 1.0,
        }
    }
}

impl LossWeights {
    pub fn formal_property_only() -> Self {
        Self {
            identifier: 0.0,
            formal_property: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown<T> {
    /// Mean cross-entropy over scorable identifier positions.
    pub identifier: T,
    /// Mean cross-entropy over scorable formal-property positions.
    pub formal_property: T,
    pub total: T,
}

#[derive(Clone, Debug)]
struct LayerParams {
    qkv_weight: ParamId,
    qkv_bias: ParamId,
    proj_weight: ParamId,
    proj_bias: ParamId,
    ln_1_weight: ParamId,
    ln_1_bias: ParamId,
    fc_weight: ParamId,
    fc_bias: ParamId,
    fc_proj_weight: ParamId,
    fc_proj_bias: ParamId,
    ln_2_weight: ParamId,
    ln_2_bias: ParamId,
}

#[derive(Clone, Debug)]
struct HeadParams {
    dense_weight: ParamId,
    dense_bias: ParamId,
    out_weight: ParamId,
    out_bias: ParamId,
    input_width: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    word_embeddings: ParamId,
    position_embeddings: ParamId,
    embeddings_ln_weight: ParamId,
    embeddings_ln_bias: ParamId,
    layers: Vec<LayerParams>,
    identifier_head: HeadParams,
    fp_head: HeadParams,
}

/// Encoder plus both heads. `T` is the element type (`f32` for training,
/// `f64` for gradient checks).
#[derive(Clone, Debug)]
pub struct JointModel<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    layout: Layout,
}

struct Initializer {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl Initializer {
    fn weight<T: Scalar>(&mut self, rows: usize, cols: usize) -> Matrix<T> {
        Matrix::from_fn(rows, cols, |_, _| T::of(self.normal.sample(&mut self.rng)))
    }
}

fn register_head<T: Scalar>(
    store: &mut ParamStore<T>,
    init: &mut Initializer,
    prefix: &str,
    input_width: usize,
    hidden: usize,
    classes: usize,
) -> HeadParams {
    HeadParams {
        dense_weight: store.insert(format!("{prefix}.dense.weight"), init.weight(input_width, hidden)),
        dense_bias: store.insert(format!("{prefix}.dense.bias"), Matrix::zeros(1, hidden)),
        out_weight: store.insert(format!("{prefix}.out.weight"), init.weight(hidden, classes)),
        out_bias: store.insert(format!("{prefix}.out.bias"), Matrix::zeros(1, classes)),
        input_width,
    }
}

/// True for parameters that belong to the shared encoder.
pub fn is_encoder_param(name: &str) -> bool {
    name.starts_with("embeddings.") || name.starts_with("encoder.")
}

impl<T: Scalar> JointModel<T> {
    /// Random initialization: normal(0, `init_std`) weights, zero biases,
    /// unit layer-norm scales.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.encoder.validate()?;
        let enc = &config.encoder;
        let d = enc.hidden_dim;
        let mut init = Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal: Normal::new(0.0, enc.init_std).map_err(|e| ModelError::InvalidConfig(e.to_string()))?,
        };
        let mut store = ParamStore::new();
        let word_embeddings = store.insert("embeddings.word.weight", init.weight(enc.vocab_size, d));
        let position_embeddings = store.insert("embeddings.position.weight", init.weight(enc.max_seq_len, d));
        let embeddings_ln_weight = store.insert("embeddings.layer_norm.weight", Matrix::filled(1, d, T::one()));
        let embeddings_ln_bias = store.insert("embeddings.layer_norm.bias", Matrix::zeros(1, d));
        let mut layers = Vec::with_capacity(enc.num_layers);
        for i in 0..enc.num_layers {
            let p = format!("encoder.h.{i}");
            layers.push(LayerParams {
                qkv_weight: store.insert(format!("{p}.attn.c_attn.weight"), init.weight(d, 3 * d)),
                qkv_bias: store.insert(format!("{p}.attn.c_attn.bias"), Matrix::zeros(1, 3 * d)),
                proj_weight: store.insert(format!("{p}.attn.c_proj.weight"), init.weight(d, d)),
                proj_bias: store.insert(format!("{p}.attn.c_proj.bias"), Matrix::zeros(1, d)),
                ln_1_weight: store.insert(format!("{p}.ln_1.weight"), Matrix::filled(1, d, T::one())),
                ln_1_bias: store.insert(format!("{p}.ln_1.bias"), Matrix::zeros(1, d)),
                fc_weight: store.insert(format!("{p}.mlp.c_fc.weight"), init.weight(d, enc.intermediate_dim)),
                fc_bias: store.insert(format!("{p}.mlp.c_fc.bias"), Matrix::zeros(1, enc.intermediate_dim)),
                fc_proj_weight: store.insert(format!("{p}.mlp.c_proj.weight"), init.weight(enc.intermediate_dim, d)),
                fc_proj_bias: store.insert(format!("{p}.mlp.c_proj.bias"), Matrix::zeros(1, d)),
                ln_2_weight: store.insert(format!("{p}.ln_2.weight"), Matrix::filled(1, d, T::one())),
                ln_2_bias: store.insert(format!("{p}.ln_2.bias"), Matrix::zeros(1, d)),
            });
        }
        let identifier_head = register_head(&mut store, &mut init, "identifier_head", d, d, IDENTIFIER_CLASSES);
        let fp_width = config.variant.fp_input_width(d);
        let fp_head = register_head(&mut store, &mut init, "fp_head", fp_width, d, FP_CLASSES);
        Ok(Self {
            layout: Layout {
                word_embeddings,
                position_embeddings,
                embeddings_ln_weight,
                embeddings_ln_bias,
                layers,
                identifier_head,
                fp_head,
            },
            params: store,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> ModelVariant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Ids of the identifier-head parameters.
    pub fn identifier_head_params(&self) -> [ParamId; 4] {
        let h = &self.layout.identifier_head;
        [h.dense_weight, h.dense_bias, h.out_weight, h.out_bias]
    }

    pub fn fp_head_params(&self) -> [ParamId; 4] {
        let h = &self.layout.fp_head;
        [h.dense_weight, h.dense_bias, h.out_weight, h.out_bias]
    }

    /// Whether the optimizer may update this parameter.
    pub fn is_trainable(&self, id: ParamId) -> bool {
        !(self.config.encoder.freeze_encoder && is_encoder_param(&self.params.get(id).name))
    }

    fn check_ids(&self, ids: &[u32]) -> Result<(), ModelError> {
        let enc = &self.config.encoder;
        if ids.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if ids.len() > enc.max_seq_len {
            return Err(ModelError::SequenceTooLong {
                len: ids.len(),
                max: enc.max_seq_len,
            });
        }
        if let Some(&id) = ids.iter().find(|&&id| id as usize >= enc.vocab_size) {
            return Err(ModelError::UnknownToken {
                id,
                vocab: enc.vocab_size,
            });
        }
        Ok(())
    }

    fn dropout(&self, g: &mut Graph<'_, T>, x: Var, rng: &mut Option<&mut ChaCha8Rng>) -> Var {
        let p = self.config.encoder.dropout;
        let Some(rng) = rng.as_deref_mut() else { return x };
        if p <= 0.0 {
            return x;
        }
        let (rows, cols) = g.value(x).shape();
        let keep = T::of(1.0 / (1.0 - p));
        let mask = Matrix::from_fn(rows, cols, |_, _| if rng.random::<f64>() < p { T::zero() } else { keep });
        g.mul_const(x, mask)
    }

    /// Records the encoder on `g`. `rng` enables dropout (training mode).
    pub fn encode_graph(
        &self,
        g: &mut Graph<'_, T>,
        ids: &[u32],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, ModelError> {
        self.check_ids(ids)?;
        let enc = &self.config.encoder;
        let eps = T::of(enc.layer_norm_eps);
        let l = &self.layout;
        let token_ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let positions: Vec<usize> = (0..ids.len()).collect();

        let words = g.param(l.word_embeddings);
        let words = g.gather(words, &token_ids);
        let pos = g.param(l.position_embeddings);
        let pos = g.gather(pos, &positions);
        let x = g.add(words, pos);
        let (gamma, beta) = (g.param(l.embeddings_ln_weight), g.param(l.embeddings_ln_bias));
        let x = g.layer_norm(x, gamma, beta, eps);
        let mut x = self.dropout(g, x, &mut rng);

        let d = enc.hidden_dim;
        let head_dim = d / enc.num_heads;
        let scale = T::of(1.0 / (head_dim as f64).sqrt());
        for layer in &l.layers {
            let w = g.param(layer.qkv_weight);
            let b = g.param(layer.qkv_bias);
            let qkv = g.matmul(x, w);
            let qkv = g.add_row(qkv, b);
            let mut contexts = Vec::with_capacity(enc.num_heads);
            for h in 0..enc.num_heads {
                let q = g.slice_cols(qkv, h * head_dim, (h + 1) * head_dim);
                let k = g.slice_cols(qkv, d + h * head_dim, d + (h + 1) * head_dim);
                let v = g.slice_cols(qkv, 2 * d + h * head_dim, 2 * d + (h + 1) * head_dim);
                let scores = g.matmul_nt(q, k);
                let scores = g.scale(scores, scale);
                let probs = g.softmax_rows(scores);
                let probs = self.dropout(g, probs, &mut rng);
                contexts.push(g.matmul(probs, v));
            }
            let ctx = if contexts.len() == 1 { contexts[0] } else { g.concat_cols(&contexts) };
            let w = g.param(layer.proj_weight);
            let b = g.param(layer.proj_bias);
            let attn = g.matmul(ctx, w);
            let attn = g.add_row(attn, b);
            let attn = self.dropout(g, attn, &mut rng);
            let residual = g.add(x, attn);
            let (gamma, beta) = (g.param(layer.ln_1_weight), g.param(layer.ln_1_bias));
            let x1 = g.layer_norm(residual, gamma, beta, eps);

            let w = g.param(layer.fc_weight);
            let b = g.param(layer.fc_bias);
            let hidden = g.matmul(x1, w);
            let hidden = g.add_row(hidden, b);
            let hidden = g.activate(hidden, enc.activation);
            let w = g.param(layer.fc_proj_weight);
            let b = g.param(layer.fc_proj_bias);
            let out = g.matmul(hidden, w);
            let out = g.add_row(out, b);
            let out = self.dropout(g, out, &mut rng);
            let residual = g.add(x1, out);
            let (gamma, beta) = (g.param(layer.ln_2_weight), g.param(layer.ln_2_bias));
            x = g.layer_norm(residual, gamma, beta, eps);
        }
        Ok(x)
    }

    fn head_graph(&self, g: &mut Graph<'_, T>, head: &HeadParams, input: Var) -> Var {
        let w = g.param(head.dense_weight);
        let b = g.param(head.dense_bias);
        let hidden = g.matmul(input, w);
        let hidden = g.add_row(hidden, b);
        let hidden = g.activate(hidden, self.config.head_activation);
        let w = g.param(head.out_weight);
        let b = g.param(head.out_bias);
        let logits = g.matmul(hidden, w);
        g.add_row(logits, b)
    }

    /// Records both heads on `g` for `variant`; fails when the model's
    /// formal-property head was built for a different input width.
    pub fn heads_graph(&self, g: &mut Graph<'_, T>, variant: ModelVariant, hidden: Var) -> Result<(Var, Var), ModelError> {
        let d = self.config.encoder.hidden_dim;
        let h_cols = g.value(hidden).cols();
        if h_cols != d {
            return Err(ModelError::ShapeMismatch(format!("hidden states have width {h_cols}, encoder width is {d}")));
        }
        let identifier_logits = self.head_graph(g, &self.layout.identifier_head, hidden);
        let fp_logits = self.fp_head_graph(g, variant, hidden, identifier_logits)?;
        Ok((identifier_logits, fp_logits))
    }

    fn fp_head_graph(&self, g: &mut Graph<'_, T>, variant: ModelVariant, hidden: Var, identifier_logits: Var) -> Result<Var, ModelError> {
        let d = self.config.encoder.hidden_dim;
        let wanted = variant.fp_input_width(d);
        let built = self.layout.fp_head.input_width;
        if wanted != built {
            return Err(ModelError::ShapeMismatch(format!(
                "{variant} needs a formal-property head of input width {wanted}, this model's head takes {built}"
            )));
        }
        let input = match variant {
            ModelVariant::Disjoint => hidden,
            ModelVariant::Joint1 => identifier_logits,
            ModelVariant::Joint2 => g.concat_cols(&[hidden, identifier_logits]),
        };
        Ok(self.head_graph(g, &self.layout.fp_head, input))
    }

    /// Hidden states in inference mode (no dropout).
    pub fn encode(&self, ids: &[u32]) -> Result<HiddenStates<T>, ModelError> {
        let mut g = Graph::new(&self.params);
        let h = self.encode_graph(&mut g, ids, None)?;
        Ok(g.value(h).clone())
    }

    /// `(identifier logits, formal-property logits)` from hidden states.
    pub fn forward(&self, variant: ModelVariant, hidden: &HiddenStates<T>) -> Result<(Matrix<T>, Matrix<T>), ModelError> {
        let mut g = Graph::new(&self.params);
        let h = g.input(hidden.clone());
        let (i, p) = self.heads_graph(&mut g, variant, h)?;
        Ok((g.value(i).clone(), g.value(p).clone()))
    }

    /// Formal-property logits from explicitly supplied hidden states and
    /// identifier logits, for wiring ablations.
    pub fn fp_logits(
        &self,
        variant: ModelVariant,
        hidden: &HiddenStates<T>,
        identifier_logits: &Matrix<T>,
    ) -> Result<Matrix<T>, ModelError> {
        if identifier_logits.cols() != IDENTIFIER_CLASSES || identifier_logits.rows() != hidden.rows() {
            return Err(ModelError::ShapeMismatch("identifier logits do not match hidden states".into()));
        }
        let mut g = Graph::new(&self.params);
        let h = g.input(hidden.clone());
        let i = g.input(identifier_logits.clone());
        let p = self.fp_head_graph(&mut g, variant, h, i)?;
        Ok(g.value(p).clone())
    }

    /// Inference on one subword sequence with the model's own variant.
    pub fn logits(&self, ids: &[u32]) -> Result<(Matrix<T>, Matrix<T>), ModelError> {
        let mut g = Graph::new(&self.params);
        let h = self.encode_graph(&mut g, ids, None)?;
        let (i, p) = self.heads_graph(&mut g, self.config.variant, h)?;
        Ok((g.value(i).clone(), g.value(p).clone()))
    }

    /// Loss of one example and its gradient for every parameter.
    pub fn loss_and_gradients(
        &self,
        example: &ModelReadyExample,
        weights: LossWeights,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(LossBreakdown<T>, Gradients<T>), ModelError> {
        let mut g = Graph::new(&self.params);
        let h = self.encode_graph(&mut g, &example.input_ids, rng)?;
        let (i, p) = self.heads_graph(&mut g, self.config.variant, h)?;
        let (n_idf, n_fp) = (scorable(&example.identifier_labels), scorable(&example.fp_labels));
        if n_idf == 0 || n_fp == 0 {
            return Err(ModelError::AllIgnored);
        }
        let idf_sum = g.cross_entropy_sum(i, &example.identifier_labels);
        let fp_sum = g.cross_entropy_sum(p, &example.fp_labels);
        let idf_term = g.scale(idf_sum, T::of(weights.identifier / n_idf as f64));
        let fp_term = g.scale(fp_sum, T::of(weights.formal_property / n_fp as f64));
        let total = g.add(idf_term, fp_term);
        let breakdown = LossBreakdown {
            identifier: g.scalar(idf_sum) / T::of(n_idf as f64),
            formal_property: g.scalar(fp_sum) / T::of(n_fp as f64),
            total: g.scalar(total),
        };
        Ok((breakdown, g.backward(total)))
    }
}

fn scorable(labels: &[Option<usize>]) -> usize {
    labels.iter().filter(|l| l.is_some()).count()
}

/// Per-position argmax of both logit matrices; softmax is monotone so it
/// is skipped. Ties resolve to the lowest label id.
pub fn predict<T: Scalar>(identifier_logits: &Matrix<T>, fp_logits: &Matrix<T>) -> (Vec<usize>, Vec<usize>) {
    (identifier_logits.argmax_rows(), fp_logits.argmax_rows())
}

/// Mean token cross-entropy of `logits` against `labels`, skipping `None`.
pub fn token_cross_entropy<T: Scalar>(logits: &Matrix<T>, labels: &[Option<usize>]) -> Result<T, ModelError> {
    if logits.rows() != labels.len() {
        return Err(ModelError::ShapeMismatch(format!("{} logit rows for {} labels", logits.rows(), labels.len())));
    }
    let mut total = T::zero();
    let mut count = 0usize;
    for (r, label) in labels.iter().enumerate() {
        let Some(gold) = *label else { continue };
        if gold >= logits.cols() {
            return Err(ModelError::ShapeMismatch(format!("label {gold} outside {} classes", logits.cols())));
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        total += lse - row[gold];
        count += 1;
    }
    if count == 0 {
        return Err(ModelError::AllIgnored);
    }
    Ok(total / T::of(count as f64))
}

/// Identifier cross-entropy plus formal-property cross-entropy.
pub fn combined_loss<T: Scalar>(
    identifier_logits: &Matrix<T>,
    fp_logits: &Matrix<T>,
    identifier_gold: &[Option<usize>],
    fp_gold: &[Option<usize>],
    weights: LossWeights,
) -> Result<LossBreakdown<T>, ModelError> {
    let identifier = token_cross_entropy(identifier_logits, identifier_gold)?;
    let formal_property = token_cross_entropy(fp_logits, fp_gold)?;
    Ok(LossBreakdown {
        identifier,
        formal_property,
        total: T::of(weights.identifier) * identifier + T::of(weights.formal_property) * formal_property,
    })
}
