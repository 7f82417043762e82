//! Seeded training loop shared by the CLI and the grid search.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::DatasetSplit;
use crate::metrics::{evaluate, MetricsReport};
use crate::nn::{Adam, AdamConfig, Model, ModelTopology};
use crate::rng::SeededRng;
use crate::tensor::Scalar;
use crate::Error;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

/// One row of the epoch log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: MetricsReport,
    pub seconds: f64,
}

impl EpochStats {
    pub fn csv_header() -> &'static str {
        "epoch,train_loss,val_loss,val_accuracy,precision,recall,f1,seconds"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3}",
            self.epoch,
            self.train_loss,
            self.val.mean_loss,
            self.val.accuracy,
            self.val.precision,
            self.val.recall,
            self.val.f1,
            self.seconds
        )
    }
}

/// Train a fresh model on the split. Deterministic given the seed: the
/// parameter initialization and every epoch's batch order derive from it.
/// A non-finite loss aborts with [`Error::Diverged`].
pub fn train(
    topology: &ModelTopology,
    split: &DatasetSplit,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Model<f32>, Vec<EpochStats>), Error> {
    if split.train.is_empty() {
        return Err(Error::Dataset("empty training set".into()));
    }
    let mut model: Model<f32> = Model::new(topology.clone(), config.seed)?;
    let mut opt = Adam::new(&model.params, AdamConfig::with_lr(config.learning_rate));
    // Batch shuffling uses its own stream so adding epochs never perturbs
    // the initialization.
    let mut batch_rng = SeededRng::new(config.seed).split(1);
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;
        for (batch, labels) in split.train.shuffled_batches(config.batch_size, &mut batch_rng) {
            let (probs, cache) = model.forward(&batch)?;
            let loss = model.batch_loss(&probs, &labels).as_f64();
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss at epoch {epoch}")));
            }
            loss_sum += loss;
            batches += 1;
            let grads = model.backward(&cache, &labels)?;
            opt.step(&mut model.params, &grads)?;
        }
        model.epochs_trained = epoch;
        let val = evaluate(&model, &split.test, config.batch_size)?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / batches as f64,
            val,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&stats);
        log.push(stats);
    }
    if !model.params.all_finite() {
        return Err(Error::Diverged("non-finite parameters after training".into()));
    }
    Ok((model, log))
}
