//! Dataset assembly, optimization and model files for one bundle detector.

mod dataset;
mod model_io;
mod optim;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use dataset::{
    assemble_binary_dataset, label_all, neighboring_bundles, prepare_input, split_streamlines, BinaryDataset,
    NeighborRule, Sample,
};
pub use model_io::{deserialize_model, format_gcm, parse_gcm, serialize_model};
pub use optim::{optimizer_step, OptimizerState};

use crate::error::{Error, Result};
use crate::gcnn::{backward, forward, init_model, softmax_cross_entropy, Architecture, FeatureBatch, GcnnModel};
use crate::graph::CoarseningHierarchy;

/// Samples per forward pass when scoring a dataset.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// L2 coefficient on non-bias parameters.
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Add a reversed copy of every training sample.
    pub reverse_augment: bool,
    pub arch: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            l2: 1e-4,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            reverse_augment: true,
            arch: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("L2 coefficient must be non-negative");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch size, epochs and patience must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("moment decays must be in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        self.arch.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Sample-weighted mean of the regularized mini-batch losses.
    pub train_loss: f64,
    /// Validation cross-entropy plus the L2 penalty, i.e. the training
    /// objective evaluated on the validation set.
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub stopped_epoch: usize,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Epochs at which the validation loss reached a new minimum.
    pub improvements: Vec<usize>,
}

impl TrainReport {
    pub fn best(&self) -> &EpochStats {
        &self.epochs[self.best_epoch - 1]
    }
}

/// Mean cross-entropy and accuracy (class 1 when its probability is at
/// least 0.5) of `model` on `data`.
pub fn evaluate_dataset(model: &GcnnModel, data: &BinaryDataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let (mut ce_sum, mut correct) = (0.0, 0usize);
    for chunk in data.samples.chunks(EVAL_CHUNK) {
        let batch = FeatureBatch::from_samples(chunk.iter().map(|s| s.input.view()))?;
        let labels: Vec<usize> = chunk.iter().map(|s| s.label).collect();
        let (logits, _) = forward(model, &batch)?;
        let (ce, probs) = softmax_cross_entropy(logits.view(), &labels)?;
        ce_sum += ce * chunk.len() as f64;
        correct += probs
            .rows()
            .into_iter()
            .zip(&labels)
            .filter(|(p, &y)| usize::from(p[1] >= 0.5) == y)
            .count();
    }
    let n = data.len() as f64;
    Ok((ce_sum / n, correct as f64 / n))
}

fn require_both_classes(data: &BinaryDataset) -> Result<()> {
    let (negatives, positives) = data.class_counts();
    if negatives == 0 || positives == 0 {
        return Err(Error::SingleClass { positives, negatives });
    }
    Ok(())
}

pub fn train(
    dataset: &BinaryDataset,
    validation: &BinaryDataset,
    config: &TrainConfig,
    hierarchy: Arc<CoarseningHierarchy>,
) -> Result<(GcnnModel, TrainReport)> {
    train_with_progress(dataset, validation, config, hierarchy, |_| {})
}

/// [`train`], calling `on_epoch` after every epoch.
pub fn train_with_progress(
    dataset: &BinaryDataset,
    validation: &BinaryDataset,
    config: &TrainConfig,
    hierarchy: Arc<CoarseningHierarchy>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(GcnnModel, TrainReport)> {
    config.validate()?;
    require_both_classes(dataset)?;
    if validation.is_empty() {
        return Err(Error::InvalidArgument("validation set is empty".into()));
    }
    let padded = hierarchy.padded_len();
    for s in dataset.samples.iter().chain(&validation.samples) {
        if s.input.dim() != (padded, crate::gcnn::INPUT_CHANNELS) || s.input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("sample {} is not a finite {padded} × 3 input", s.id)));
        }
    }

    let augmented;
    let train_set = if config.reverse_augment {
        augmented = dataset.with_reversals(&hierarchy)?;
        &augmented
    } else {
        dataset
    };

    let mut model = init_model(
        hierarchy,
        config.arch,
        config.seed,
        dataset.normalization,
        dataset.bundle.clone(),
    )?;
    let mut state = OptimizerState::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut epochs = Vec::new();
    let mut improvements = Vec::new();
    let mut best: Option<(f64, usize, GcnnModel)> = None;
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for idx in order.chunks(config.batch_size) {
            let batch = FeatureBatch::from_samples(idx.iter().map(|&i| train_set.samples[i].input.view()))?;
            let labels: Vec<usize> = idx.iter().map(|&i| train_set.samples[i].label).collect();
            let (logits, tape) = forward(&model, &batch)?;
            let (ce, _) = softmax_cross_entropy(logits.view(), &labels)?;
            let batch_loss = ce + config.l2 * model.weight_sq_norm();
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += batch_loss * idx.len() as f64;
            let grads = backward(&model, &tape, &labels, config.l2)?;
            optimizer_step(&mut state, &mut model, &grads, config)?;
        }
        let (val_ce, val_accuracy) = evaluate_dataset(&model, validation)?;
        let val_loss = val_ce + config.l2 * model.weight_sq_norm();
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
            val_accuracy,
        };
        on_epoch(&stats);
        epochs.push(stats);

        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, model.clone()));
            improvements.push(epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    let report = TrainReport {
        stopped_epoch: epochs.len(),
        epochs,
        best_epoch,
        improvements,
    };
    Ok((best_model, report))
}
