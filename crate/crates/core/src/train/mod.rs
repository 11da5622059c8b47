//! Mini-batch training, evaluation and metric histories.
//!
//! Per-example gradients may be computed on the rayon pool, but they are
//! always summed in batch order, so serial and parallel runs with the same
//! seed produce bit-identical parameters.

pub mod metrics;
pub mod optim;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FormalPropertyLabelMap, IdentifierLabel, ModelReadyExample};
use crate::model::tensor::softmax_in_place;
use crate::model::{Gradients, JointModel, LossWeights, ModelConfig, ModelError, ModelVariant};
use crate::scalar::Scalar;
pub use metrics::{acc_fprop, acc_idf, confusion, ConfusionMatrix, ErrorDistribution, FpMatch, MetricsError};
pub use optim::{decay_for, AdamW, AdamWConfig};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Per-variant epoch counts that replace `epochs`.
    pub variant_epochs: BTreeMap<ModelVariant, usize>,
    pub weight_decay: f64,
    /// Parameters whose name contains any of these get no weight decay.
    pub no_regularization_names: Vec<String>,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub loss_weights: LossWeights,
    pub fp_match: FpMatch,
    /// Compute per-example gradients on the rayon pool.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 20,
            variant_epochs: BTreeMap::from([(ModelVariant::Joint1, 40)]),
            weight_decay: 0.1,
            no_regularization_names: ["bias", "ln_1", "ln_2"].map(String::from).to_vec(),
            batch_size: 16,
            seed: 42,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            loss_weights: LossWeights::default(),
            fp_match: FpMatch::RelationPosition,
            parallel: false,
        }
    }
}

impl TrainConfig {
    /// Preset for the randomly initialized tiny encoder: the default
    /// schedule with learning rate 3e-3 and batch size 4.
    pub fn tiny() -> Self {
        Self {
            learning_rate: 3e-3,
            batch_size: 4,
            ..Self::default()
        }
    }

    pub fn epochs_for(&self, variant: ModelVariant) -> usize {
        self.variant_epochs.get(&variant).copied().unwrap_or(self.epochs)
    }

    pub fn validate(&self, variant: ModelVariant) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.epochs_for(variant) < 1 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("betas must be in [0, 1) and adam_eps positive");
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

/// One row of the metric history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub epoch: usize,
    pub train_idf: f64,
    pub train_fprop: f64,
    pub valid_idf: f64,
    pub valid_fprop: f64,
    /// Mean training loss seen during the epoch.
    pub train_loss: f64,
    /// Mean validation loss in inference mode.
    pub valid_loss: f64,
}

/// Per-position predictions for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub identifier: Vec<usize>,
    pub formal_property: Vec<usize>,
    /// Softmax probability of the predicted formal-property label.
    pub fp_confidence: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub acc_idf: f64,
    pub acc_fprop: f64,
    /// Mean per-example combined loss.
    pub loss: f64,
    pub predictions: Vec<Prediction>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn derive_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ epoch as u64) ^ index as u64)
}

fn predict_one<T: Scalar>(
    model: &JointModel<T>,
    example: &ModelReadyExample,
    weights: LossWeights,
) -> Result<(Prediction, f64), ModelError> {
    let (idf_logits, fp_logits) = model.logits(&example.input_ids)?;
    let loss = crate::model::combined_loss(
        &idf_logits,
        &fp_logits,
        &example.identifier_labels,
        &example.fp_labels,
        weights,
    )?;
    let (identifier, formal_property) = crate::model::predict(&idf_logits, &fp_logits);
    let fp_confidence = (0..fp_logits.rows())
        .map(|r| {
            let mut row = fp_logits.row(r).to_vec();
            softmax_in_place(&mut row);
            row[formal_property[r]].as_f64()
        })
        .collect();
    Ok((
        Prediction {
            identifier,
            formal_property,
            fp_confidence,
        },
        loss.total.as_f64(),
    ))
}

/// Inference-mode predictions and both metrics over `examples`.
pub fn evaluate<T: Scalar>(
    model: &JointModel<T>,
    examples: &[ModelReadyExample],
    cfg: &TrainConfig,
) -> Result<Evaluation, TrainError> {
    if examples.is_empty() {
        return Err(MetricsError::EmptyBatch.into());
    }
    let run = |e: &ModelReadyExample| predict_one(model, e, cfg.loss_weights);
    let results: Vec<Result<(Prediction, f64), ModelError>> = if cfg.parallel {
        examples.par_iter().map(run).collect()
    } else {
        examples.iter().map(run).collect()
    };
    let mut predictions = Vec::with_capacity(examples.len());
    let mut loss = 0.0;
    for r in results {
        let (p, l) = r?;
        predictions.push(p);
        loss += l;
    }
    let idf_pred: Vec<&[usize]> = predictions.iter().map(|p| p.identifier.as_slice()).collect();
    let fp_pred: Vec<&[usize]> = predictions.iter().map(|p| p.formal_property.as_slice()).collect();
    let idf_gold: Vec<&[Option<usize>]> = examples.iter().map(|e| e.identifier_labels.as_slice()).collect();
    let fp_gold: Vec<&[Option<usize>]> = examples.iter().map(|e| e.fp_labels.as_slice()).collect();
    Ok(Evaluation {
        acc_idf: acc_idf(&idf_pred, &idf_gold)?,
        acc_fprop: acc_fprop(&fp_pred, &fp_gold, cfg.fp_match)?,
        loss: loss / examples.len() as f64,
        predictions,
    })
}

/// Confusion counts of `predictions` against the gold labels of `examples`.
pub fn error_distribution_from(
    predictions: &[Prediction],
    examples: &[ModelReadyExample],
    fp_labels: &FormalPropertyLabelMap,
) -> Result<ErrorDistribution, MetricsError> {
    let mut dist = ErrorDistribution::new(
        IdentifierLabel::ALL.iter().map(|l| l.name().to_string()).collect(),
        fp_labels.names().to_vec(),
    );
    let idf_pred: Vec<&[usize]> = predictions.iter().map(|p| p.identifier.as_slice()).collect();
    let fp_pred: Vec<&[usize]> = predictions.iter().map(|p| p.formal_property.as_slice()).collect();
    let idf_gold: Vec<&[Option<usize>]> = examples.iter().map(|e| e.identifier_labels.as_slice()).collect();
    let fp_gold: Vec<&[Option<usize>]> = examples.iter().map(|e| e.fp_labels.as_slice()).collect();
    confusion(&mut dist.identifier, &idf_pred, &idf_gold)?;
    confusion(&mut dist.formal_property, &fp_pred, &fp_gold)?;
    Ok(dist)
}

/// Runs the model over `examples` and tabulates its errors.
pub fn error_distribution<T: Scalar>(
    model: &JointModel<T>,
    examples: &[ModelReadyExample],
    fp_labels: &FormalPropertyLabelMap,
    cfg: &TrainConfig,
) -> Result<ErrorDistribution, TrainError> {
    let eval = evaluate(model, examples, cfg)?;
    Ok(error_distribution_from(&eval.predictions, examples, fp_labels)?)
}

/// Owns a model and its optimizer for the duration of training.
pub struct Trainer<T> {
    model: JointModel<T>,
    optimizer: AdamW<T>,
    cfg: TrainConfig,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: JointModel<T>, cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate(model.variant())?;
        let optimizer = AdamW::new(
            model.params(),
            cfg.adamw(),
            cfg.weight_decay,
            &cfg.no_regularization_names,
            |id| model.is_trainable(id),
        );
        Ok(Self { model, optimizer, cfg })
    }

    pub fn model(&self) -> &JointModel<T> {
        &self.model
    }

    pub fn optimizer(&self) -> &AdamW<T> {
        &self.optimizer
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn into_model(self) -> JointModel<T> {
        self.model
    }

    /// Summed gradient of one batch, accumulated in batch order.
    fn batch_gradients(
        &self,
        examples: &[ModelReadyExample],
        batch: &[usize],
        epoch: usize,
    ) -> Result<(f64, Gradients<T>), ModelError> {
        let run = |&i: &usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, epoch, i));
            self.model
                .loss_and_gradients(&examples[i], self.cfg.loss_weights, Some(&mut rng))
        };
        let results: Vec<_> = if self.cfg.parallel {
            batch.par_iter().map(run).collect()
        } else {
            batch.iter().map(run).collect()
        };
        let mut total = Gradients::empty(self.model.params().len());
        let mut loss = 0.0;
        for r in results {
            let (l, g) = r?;
            loss += l.total.as_f64();
            total.merge(g);
        }
        Ok((loss, total))
    }

    /// One pass over `train` in a seeded order; returns the mean loss.
    pub fn run_epoch(&mut self, train: &[ModelReadyExample], epoch: usize) -> Result<f64, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptySplit("train"));
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, epoch, usize::MAX)));
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(self.cfg.batch_size).enumerate() {
            let (loss, mut grads) = self.batch_gradients(train, batch, epoch)?;
            if !loss.is_finite() {
                return Err(TrainError::Divergence { epoch, batch: b });
            }
            loss_sum += loss;
            grads.scale(T::of(1.0 / batch.len() as f64));
            self.optimizer.step(self.model.params_mut(), &grads);
        }
        Ok(loss_sum / train.len() as f64)
    }

    /// Trains for the configured number of epochs, evaluating both splits
    /// after each one.
    pub fn fit(
        &mut self,
        train: &[ModelReadyExample],
        valid: &[ModelReadyExample],
    ) -> Result<Vec<MetricRecord>, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptySplit("train"));
        }
        if valid.is_empty() {
            return Err(TrainError::EmptySplit("valid"));
        }
        let epochs = self.cfg.epochs_for(self.model.variant());
        let mut history = Vec::with_capacity(epochs);
        for epoch in 1..=epochs {
            let train_loss = self.run_epoch(train, epoch)?;
            let on_train = evaluate(&self.model, train, &self.cfg)?;
            let on_valid = evaluate(&self.model, valid, &self.cfg)?;
            let record = MetricRecord {
                epoch,
                train_idf: on_train.acc_idf,
                train_fprop: on_train.acc_fprop,
                valid_idf: on_valid.acc_idf,
                valid_fprop: on_valid.acc_fprop,
                train_loss,
                valid_loss: on_valid.loss,
            };
            log::info!(
                "epoch {epoch}: loss {:.4} train idf {:.4} fprop {:.4} valid idf {:.4} fprop {:.4}",
                record.train_loss,
                record.train_idf,
                record.train_fprop,
                record.valid_idf,
                record.valid_fprop
            );
            history.push(record);
        }
        Ok(history)
    }
}

/// Builds a model seeded from `cfg.seed` and trains it.
pub fn train<T: Scalar>(
    model_config: ModelConfig,
    train: &[ModelReadyExample],
    valid: &[ModelReadyExample],
    cfg: &TrainConfig,
) -> Result<(JointModel<T>, Vec<MetricRecord>), TrainError> {
    cfg.validate(model_config.variant)?;
    let model = JointModel::new(model_config, cfg.seed)?;
    let mut trainer = Trainer::new(model, cfg.clone())?;
    let history = trainer.fit(train, valid)?;
    Ok((trainer.into_model(), history))
}

/// Metric history as CSV with a header row.
pub fn write_metrics_csv(out: impl Write, history: &[MetricRecord]) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_writer(out);
    for r in history {
        w.serialize(r).map_err(|e| TrainError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| TrainError::Io(e.to_string()))
}

pub fn save_metrics_csv(path: &Path, history: &[MetricRecord]) -> Result<(), TrainError> {
    let file = std::fs::File::create(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
    write_metrics_csv(file, history)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRecord>, TrainError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| TrainError::Io(e.to_string()))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| TrainError::Io(e.to_string()))
}
