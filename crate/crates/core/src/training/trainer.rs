use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use super::backprop::loss_and_gradients_with;
use super::optim::{clip_global_norm, AdamState, Optimizer, OptimizerKind, SgdState};
use crate::data::{make_batches, Dataset, FeatureMode};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{argmax, cross_entropy};
use crate::parallel::Executor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// SGD only.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global-norm clipping threshold; 0 disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
    /// Epochs without dev improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    /// Token truncation length; `None` means 256 for chars, 128 for words.
    pub max_seq_len: Option<usize>,
    /// 1 = serial. More threads parallelize per-sample gradients.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            momentum: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 50,
            batch_size: 32,
            clip_norm: 5.0,
            seed: 1,
            early_stop_patience: 5,
            max_seq_len: None,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.clip_norm < 0.0 {
            return Err(Error::Config("clip_norm must be >= 0".into()));
        }
        if self.max_seq_len == Some(0) {
            return Err(Error::Config("max_seq_len must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(Error::Config("adam needs 0 <= beta < 1 and eps > 0".into()));
        }
        Ok(())
    }

    /// Effective truncation length for `mode`.
    pub fn seq_len_for(&self, mode: FeatureMode) -> usize {
        match (self.max_seq_len, mode) {
            (Some(n), _) => n,
            (None, FeatureMode::Word) => 128,
            (None, _) => 256,
        }
    }

    fn optimizer(&self, model: &Model) -> Optimizer {
        match self.optimizer {
            OptimizerKind::Sgd => Optimizer::Sgd {
                state: SgdState::new(&model.params),
                lr: self.learning_rate,
                momentum: self.momentum,
            },
            OptimizerKind::Adam => Optimizer::Adam {
                state: AdamState::new(&model.params, self.beta1, self.beta2, self.eps),
                lr: self.learning_rate,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub dev_accuracy: f64,
    pub dev_loss: f64,
}

impl EpochStats {
    pub fn log_line(&self) -> String {
        format!(
            "epoch={} train_loss={} train_acc={:.4} dev_acc={:.4}",
            self.epoch, self.train_loss, self.train_accuracy, self.dev_accuracy
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub first_batch_loss: f64,
    pub stopped_early: bool,
    pub wall_time_secs: f64,
}

/// Predictions of a model over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    /// `(gold, predicted)` label ids in dataset order.
    pub pairs: Vec<(usize, usize)>,
}

/// Argmax prediction per sample (ties go to the lowest label id).
pub fn evaluate_split(model: &Model, dataset: &Dataset, exec: &Executor) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::Degenerate("cannot evaluate an empty dataset".into()));
    }
    if dataset.mode != model.config.mode {
        return Err(Error::shape(format!(
            "{} dataset given to a {}-mode model",
            dataset.mode, model.config.mode
        )));
    }
    let results = exec.map(dataset.len(), |i| {
        let s = &dataset.samples[i];
        let p = model.forward_classify(s.view())?;
        Ok::<_, Error>((argmax(&p), cross_entropy(&p, s.label)?))
    });
    let mut pairs = Vec::with_capacity(dataset.len());
    let mut loss = 0.0;
    for (s, r) in dataset.samples.iter().zip(results) {
        let (pred, l) = r?;
        pairs.push((s.label, pred));
        loss += l;
    }
    let correct = pairs.iter().filter(|(g, p)| g == p).count();
    let n = dataset.len() as f64;
    Ok(Evaluation { accuracy: correct as f64 / n, mean_loss: loss / n, pairs })
}

fn check_compatible(model: &Model, ds: &Dataset, what: &str) -> Result<()> {
    if ds.mode != model.config.mode {
        return Err(Error::shape(format!("{what} set is {} but the model is {}", ds.mode, model.config.mode)));
    }
    if ds.labels.len() != model.config.class_count {
        return Err(Error::Config(format!(
            "{what} set has {} labels, model has {} classes",
            ds.labels.len(),
            model.config.class_count
        )));
    }
    Ok(())
}

/// [`train_with_observer`] without an observer.
pub fn train(model: Model, train: &Dataset, dev: Option<&Dataset>, config: &TrainConfig) -> Result<(Model, TrainReport)> {
    train_with_observer(model, train, dev, config, |_| {})
}

/// Mini-batch training with dev-based model selection.
///
/// Each epoch shuffles with a seed derived from `config.seed`, steps the
/// optimizer once per batch, and then scores the dev set (the train set when
/// no dev set is given). The parameters of the best epoch are returned: the
/// highest dev accuracy, with lower dev loss breaking ties. Training stops
/// after `early_stop_patience` epochs without such an improvement.
pub fn train_with_observer(
    mut model: Model,
    train: &Dataset,
    dev: Option<&Dataset>,
    config: &TrainConfig,
    mut observe: impl FnMut(&EpochStats),
) -> Result<(Model, TrainReport)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Degenerate("empty training set".into()));
    }
    check_compatible(&model, train, "training")?;
    if let Some(d) = dev {
        check_compatible(&model, d, "dev")?;
        if d.labels != train.labels {
            return Err(Error::Config("dev and training label sets differ".into()));
        }
    }
    let selection_set = dev.filter(|d| !d.is_empty()).unwrap_or(train);
    let exec = Executor::with_threads(config.threads)?;
    let mut optimizer = config.optimizer(&model);
    let start = Instant::now();

    let mut best: Option<(f64, f64, usize, Model)> = None;
    let mut stale = 0;
    let mut epochs = Vec::new();
    let mut first_batch_loss = f64::NAN;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        let batches = make_batches(train, config.batch_size, config.seed.wrapping_add(epoch as u64), true)?;
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (b, batch) in batches.iter().enumerate() {
            let mut out = loss_and_gradients_with(&model, batch, &exec).map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch} batch {}: {msg}", b + 1)),
                other => other,
            })?;
            if epoch == 1 && b == 0 {
                first_batch_loss = out.loss;
            }
            loss_sum += out.loss * batch.len() as f64;
            correct += out.correct;
            if config.clip_norm > 0.0 {
                clip_global_norm(&mut out.gradients, config.clip_norm);
            }
            optimizer.step(&mut model.params, &out.gradients);
        }
        if !model.params.all_finite() {
            return Err(Error::Numeric(format!("epoch {epoch}: parameters diverged")));
        }

        let eval = evaluate_split(&model, selection_set, &exec)?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            dev_accuracy: eval.accuracy,
            dev_loss: eval.mean_loss,
        };
        info!("{}", stats.log_line());
        observe(&stats);

        let improved = match &best {
            None => true,
            Some((acc, loss, _, _)) => eval.accuracy > *acc || (eval.accuracy == *acc && eval.mean_loss < *loss),
        };
        epochs.push(stats);
        if improved {
            best = Some((eval.accuracy, eval.mean_loss, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if config.early_stop_patience > 0 && stale >= config.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (_, _, best_epoch, best_model) = best.expect("at least one epoch ran");
    let report = TrainReport {
        epochs,
        best_epoch,
        first_batch_loss,
        stopped_early,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((best_model, report))
}
