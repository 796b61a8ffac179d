use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::engine::{softmax_cross_entropy, softmax_cross_entropy_backward, Mode, Scalar};
use crate::eval::image_accuracy;
use crate::model::{apply_running_stats, backward, forward, NetworkSpec, ParameterStore};
use crate::{seed, Error, Result};

use super::adadelta::{AdadeltaConfig, AdadeltaState};
use super::dataset::{load_batch, ExampleSet};
use super::evaluate::evaluate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    /// Smallest validation-accuracy gain that counts as an improvement.
    pub min_delta: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub restore_best: bool,
    pub optimizer: AdadeltaConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 120,
            patience: 15,
            min_delta: 1e-4,
            batch_size: 32,
            seed: 0,
            restore_best: true,
            optimizer: AdadeltaConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "patience ({}) must be below max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.min_delta.is_nan() || self.min_delta < 0.0 {
            return Err(Error::Config(
                "min_delta must be a non-negative number".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

/// Patience rule over a per-epoch score. The first observation always counts
/// as an improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        let improved = match self.best {
            None => true,
            Some((_, best)) => score - best > self.min_delta,
        };
        if improved {
            self.best = Some((epoch, score));
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        StopDecision {
            improved,
            stop: self.stale >= self.patience,
        }
    }

    /// `(epoch, score)` of the last improvement.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Last epoch run (1-based).
    pub stopped_epoch: usize,
    /// Epoch whose weights the store holds when `restore_best` is set.
    pub best_epoch: usize,
    pub best_validation_accuracy: f64,
    pub wall_time_secs: f64,
}

impl TrainReport {
    /// Equality ignoring wall time.
    pub fn same_trajectory(&self, other: &TrainReport) -> bool {
        self.epochs == other.epochs
            && self.stopped_epoch == other.stopped_epoch
            && self.best_epoch == other.best_epoch
            && self.best_validation_accuracy == other.best_validation_accuracy
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// One optimizer over one parameter store.
pub struct Trainer<'a, T: Scalar> {
    spec: &'a NetworkSpec,
    store: &'a mut ParameterStore<T>,
    state: AdadeltaState<T>,
    batch_size: usize,
    seed: u64,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(
        spec: &'a NetworkSpec,
        store: &'a mut ParameterStore<T>,
        config: &TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        store.check_layout(spec)?;
        let state = AdadeltaState::new(store, config.optimizer);
        Ok(Self {
            spec,
            store,
            state,
            batch_size: config.batch_size,
            seed: config.seed,
        })
    }

    pub fn store(&self) -> &ParameterStore<T> {
        self.store
    }

    /// One pass over `train` in a shuffled order drawn from `(seed, epoch)`.
    /// Reports the image-weighted mean loss and the running train accuracy.
    pub fn run_epoch(&mut self, train: &dyn ExampleSet, epoch: usize) -> Result<EpochStats> {
        if train.is_empty() {
            return Err(Error::Data("empty training set".into()));
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seed::stream(self.seed, seed::SHUFFLE, &[epoch as u64]));
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        self.store.zero_grads();
        for chunk in order.chunks(self.batch_size) {
            let batch = load_batch::<T>(train, chunk)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| train.label(i).index()).collect();
            let pass = forward(self.spec, self.store, &batch, Mode::Train)?;
            let ce = softmax_cross_entropy(pass.logits(), &labels)?;
            let grad = softmax_cross_entropy_backward(&ce.probabilities, &labels)?;
            backward(self.spec, self.store, &pass, &grad)?;
            apply_running_stats(self.spec, self.store, &pass)?;
            self.state.step(self.store)?;

            loss_sum += ce.loss.to_f64().unwrap_or(f64::NAN) * chunk.len() as f64;
            correct += ce
                .probabilities
                .data()
                .chunks(2)
                .zip(&labels)
                .filter(|(p, &y)| usize::from(p[1] > p[0]) == y)
                .count();
        }
        let loss = loss_sum / train.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Network(format!(
                "training loss became non-finite in epoch {epoch}"
            )));
        }
        Ok(EpochStats {
            loss,
            accuracy: correct as f64 / train.len() as f64,
        })
    }
}

fn patients(set: &dyn ExampleSet) -> HashSet<&str> {
    (0..set.len()).map(|i| set.patient(i)).collect()
}

/// Trains with Adadelta until `max_epochs` or until validation accuracy has
/// not improved by more than `min_delta` for `patience` epochs.
///
/// With `restore_best` the store ends up holding the best-validation weights.
pub fn fit<T: Scalar>(
    spec: &NetworkSpec,
    store: &mut ParameterStore<T>,
    train: &dyn ExampleSet,
    validation: &dyn ExampleSet,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Data(
            "training and validation sets must both be non-empty".into(),
        ));
    }
    if let Some(p) = patients(train).intersection(&patients(validation)).next() {
        return Err(Error::Data(format!(
            "patient `{p}` appears in both training and validation sets"
        )));
    }
    let started = Instant::now();
    let mut stopping = EarlyStopping::new(config.patience, config.min_delta);
    let mut best_store = None;
    let mut epochs = Vec::new();
    let mut trainer = Trainer::new(spec, store, config)?;
    for epoch in 1..=config.max_epochs {
        let stats = trainer.run_epoch(train, epoch)?;
        let predictions = evaluate(spec, trainer.store(), validation, config.batch_size)?;
        let validation_accuracy = image_accuracy(&predictions)?;
        log::info!(
            "epoch {epoch:>3}: loss {:.4}  train acc {:.4}  val acc {validation_accuracy:.4}",
            stats.loss,
            stats.accuracy
        );
        epochs.push(EpochRecord {
            epoch,
            train_loss: stats.loss,
            train_accuracy: stats.accuracy,
            validation_accuracy,
        });
        let decision = stopping.observe(epoch, validation_accuracy);
        if decision.improved && config.restore_best {
            best_store = Some(trainer.store().clone());
        }
        if decision.stop {
            log::info!("early stop after epoch {epoch}");
            break;
        }
    }
    drop(trainer);
    let (best_epoch, best_validation_accuracy) = stopping.best().expect("at least one epoch ran");
    if let Some(best) = best_store {
        *store = best;
    }
    Ok(TrainReport {
        stopped_epoch: epochs.len(),
        epochs,
        best_epoch,
        best_validation_accuracy,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}
