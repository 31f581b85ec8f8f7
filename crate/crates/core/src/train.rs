//! Fixed-protocol minibatch training and iteration-matched scheduling.

use std::path::PathBuf;
use std::time::Instant;

use freqsweep_tensor::{Graph, Optimizer, OptimizerKind, TensorError};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricResult};
use crate::model::{build_model, Batch, ModelConfig, ToyPredictor};
use crate::seed::{self, SeedKey};
use crate::subsample::{build_training_set, FrequencyDataset, SampleFactory, TrainingSample};
use crate::world::{Role, SceneSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerChoice {
    Sgd,
    Adam,
}

impl From<OptimizerChoice> for OptimizerKind {
    fn from(c: OptimizerChoice) -> Self {
        match c {
            OptimizerChoice::Sgd => OptimizerKind::Sgd,
            OptimizerChoice::Adam => OptimizerKind::Adam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerChoice,
    pub shuffle: bool,
    #[serde(default)]
    pub weight_decay: f64,
    /// Per-epoch multiplicative learning-rate decay; 1 keeps it constant.
    #[serde(default = "unit_decay")]
    pub lr_decay: f64,
}

fn unit_decay() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 4,
            seed: 0,
            optimizer: OptimizerChoice::Adam,
            shuffle: true,
            weight_decay: 0.0,
            lr_decay: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be ≥ 0".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr_decay must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub frequency: f64,
    pub width: usize,
    pub seed: u64,
    pub epochs: usize,
    pub total_steps: u64,
    /// Mean per-sample loss of each epoch, in network units.
    pub loss_curve: Vec<f64>,
    /// Seconds.
    pub wall_time: f64,
    pub checkpoint: Option<PathBuf>,
}

/// Optimizer steps for one run: `epochs · ⌈samples / batch⌉`.
pub fn steps_for(samples: usize, batch_size: usize, epochs: usize) -> u64 {
    (epochs * samples.div_ceil(batch_size)) as u64
}

fn diverged(step: u64, err: Error) -> Error {
    match err {
        Error::Tensor(TensorError::NonFinite { .. }) => Error::Divergence {
            step,
            loss: f64::NAN,
        },
        other => other,
    }
}

/// Minimize mean MSE over `dataset` in place; deterministic in the model
/// parameters, `config.seed` and the dataset.
pub fn train(
    model: &mut ToyPredictor,
    dataset: &FrequencyDataset,
    config: &TrainConfig,
) -> Result<RunRecord> {
    config.validate()?;
    if dataset.role != Role::Train {
        return Err(Error::Config("training requires a train dataset".into()));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("nothing to train on".into()));
    }
    let started = Instant::now();
    let mut optimizer =
        Optimizer::new(config.optimizer.into(), config.learning_rate).with_weight_decay(config.weight_decay);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut step = 0u64;
    for epoch in 0..config.epochs {
        optimizer.set_learning_rate(config.learning_rate * config.lr_decay.powi(epoch as i32));
        if config.shuffle {
            order.sort_unstable();
            let mut rng = SeedKey::new(config.seed)
                .with(seed::SHUFFLE)
                .with(epoch as u64)
                .rng();
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let samples: Vec<&TrainingSample> = chunk.iter().map(|&i| &dataset.samples[i]).collect();
            let batch = Batch::from_samples(&samples)?;
            let mut g = Graph::new();
            let loss = model.loss(&mut g, &batch).map_err(|e| diverged(step, e))?;
            let value = g.value(loss).item()?;
            if !value.is_finite() {
                return Err(Error::Divergence { step, loss: value });
            }
            g.backward(loss, model.params_mut())
                .map_err(|e| diverged(step, e.into()))?;
            optimizer.step(model.params_mut())?;
            epoch_loss += value * chunk.len() as f64;
            step += 1;
        }
        loss_curve.push(epoch_loss / dataset.len() as f64);
    }
    debug_assert_eq!(step, steps_for(dataset.len(), config.batch_size, config.epochs));
    Ok(RunRecord {
        frequency: dataset.frequency,
        width: model.config().width,
        seed: config.seed,
        epochs: config.epochs,
        total_steps: step,
        loss_curve,
        wall_time: started.elapsed().as_secs_f64(),
        checkpoint: None,
    })
}

/// `round(f_ref · epochs_ref / f_target)`, at least 1.
pub fn iteration_matched_epochs(f_ref: f64, epochs_ref: usize, f_target: f64) -> usize {
    ((f_ref * epochs_ref as f64 / f_target).round() as usize).max(1)
}

/// Relative ADE change of `ade` against `reference`, percent.
pub fn delta_ade_percent(ade: f64, reference: f64) -> f64 {
    (ade - reference) / reference * 100.0
}

/// Signed percentage with two decimals, e.g. `-12.05%`.
pub fn format_delta(percent: f64) -> String {
    format!("{percent:+.2}%")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSide {
    pub frequency: f64,
    pub epochs: usize,
    pub record: RunRecord,
    pub metrics: MetricResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedPair {
    pub low: PairSide,
    pub high: PairSide,
    /// ADE change of the low-frequency run relative to the high one, percent.
    pub delta_ade_percent: f64,
}

/// Everything a matched pair shares besides the two frequencies.
#[derive(Debug, Clone)]
pub struct PairSetup<'a> {
    pub train_scenes: &'a SceneSet,
    pub validation: &'a FrequencyDataset,
    pub factory: &'a SampleFactory,
    pub model: &'a ModelConfig,
    pub train: &'a TrainConfig,
}

/// Train at `f_high` for `epochs_high` and at `f_low` for the matched epoch
/// count, then evaluate both on the shared validation set.
pub fn run_matched_pair(
    setup: &PairSetup<'_>,
    f_low: f64,
    f_high: f64,
    epochs_high: usize,
) -> Result<MatchedPair> {
    if !(f_low < f_high) {
        return Err(Error::Config(format!(
            "matched pair needs f_low < f_high, got {f_low} and {f_high}"
        )));
    }
    let side = |f: f64, epochs: usize| -> Result<PairSide> {
        let data = build_training_set(setup.train_scenes, f, setup.factory)?;
        let mut model = build_model(setup.model)?;
        let config = TrainConfig {
            epochs,
            ..setup.train.clone()
        };
        let record = train(&mut model, &data, &config)?;
        let metrics = evaluate(&model, setup.validation)?;
        Ok(PairSide {
            frequency: f,
            epochs,
            record,
            metrics,
        })
    };
    let high = side(f_high, epochs_high)?;
    let low = side(f_low, iteration_matched_epochs(f_high, epochs_high, f_low))?;
    Ok(MatchedPair {
        delta_ade_percent: delta_ade_percent(low.metrics.ade, high.metrics.ade),
        low,
        high,
    })
}
