use rayon::prelude::*;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::features::{EventClass, FeatureSequence};
use crate::model::{self, Classifier, ModelConfig, ModelParams, Standardizer};
use crate::rng::SplitMix64;
use crate::train::{adam_step, cross_entropy, AdamState};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.patience == 0 {
            return bad("batch_size and patience must be positive".into());
        }
        if self.max_epochs > 0 && self.patience > self.max_epochs {
            return bad(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("adam epsilon must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the epoch's mini-batches, measured before each update.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned, if any epoch ran.
    pub best_epoch: Option<usize>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        use crate::io::format_real;
        let mut out = String::from("epoch,train_loss,val_loss,val_accuracy\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch,
                format_real(e.train_loss),
                format_real(e.val_loss),
                format_real(e.val_accuracy)
            ));
        }
        out
    }
}

fn check_uniform(sets: &[&[FeatureSequence]]) -> Result<(usize, usize)> {
    let first = sets
        .iter()
        .find_map(|s| s.first())
        .ok_or_else(|| Error::Usage("training needs samples".into()))?;
    let shape = (first.steps(), first.channels());
    for s in sets.iter().flat_map(|s| s.iter()) {
        if (s.steps(), s.channels()) != shape {
            return Err(Error::Validation(format!(
                "sample {} is {}×{}, expected {}×{}",
                s.sample_id,
                s.steps(),
                s.channels(),
                shape.0,
                shape.1
            )));
        }
    }
    Ok(shape)
}

fn prepared(c: &Classifier, set: &[FeatureSequence]) -> Result<Vec<(Tensor, EventClass)>> {
    set.iter().map(|s| Ok((c.prepare(s)?, s.label))).collect()
}

fn validation_pass(c: &Classifier, val: &[(Tensor, EventClass)]) -> Result<(f64, f64)> {
    let results = val
        .par_iter()
        .map(|(x, label)| {
            let probs = model::forward(x, &c.params, &c.config)?;
            Ok((cross_entropy(&probs, label.index())?, model::predict_class(&probs) == *label))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = results.len() as f64;
    let loss = results.iter().map(|r| r.0).sum::<f64>() / n;
    let acc = results.iter().filter(|r| r.1).count() as f64 / n;
    Ok((loss, acc))
}

/// Mini-batch Adam on mean cross-entropy with early stopping.
///
/// The input standardizer is fit on the training rows. Each epoch reshuffles
/// the training order with a generator seeded once by `train_config.seed`.
/// Per-sample gradients are computed in parallel and summed in batch order,
/// so results do not depend on the thread count. The parameters with the
/// lowest validation loss seen are returned.
pub fn train(
    train_set: &[FeatureSequence],
    val_set: &[FeatureSequence],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(Classifier, TrainingLog)> {
    train_config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Usage("training and validation sets must be nonempty".into()));
    }
    let (steps, channels) = check_uniform(&[train_set, val_set])?;
    let config = ModelConfig {
        input_dim: channels,
        steps,
        ..model_config.clone()
    };
    let scaler = Standardizer::fit(train_set.iter().flat_map(|s| (0..s.steps()).map(move |t| s.row(t))))?;
    let mut current = Classifier {
        params: ModelParams::init(&config)?,
        config,
        scaler,
    };
    let mut log = TrainingLog::default();
    if train_config.max_epochs == 0 {
        return Ok((current, log));
    }

    let train_data = prepared(&current, train_set)?;
    let val_data = prepared(&current, val_set)?;
    let mut rng = SplitMix64::new(train_config.seed);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut adam = AdamState::new(&current.params);
    let mut best = current.clone();
    let mut best_loss = f64::INFINITY;
    let mut stale = 0;

    for epoch in 0..train_config.max_epochs {
        rng.shuffle(&mut order);
        let mut loss_total = 0.0;
        for batch in order.chunks(train_config.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let (x, label) = &train_data[i];
                    model::loss_and_gradient(x, *label, &current.params, &current.config)
                })
                .collect::<Result<Vec<_>>>()?;
            let scale = 1.0 / batch.len() as f64;
            let mut summed: Vec<Vec<f64>> = results[0].1.iter().map(|g| vec![0.0; g.len()]).collect();
            for (loss, grads) in &results {
                loss_total += loss;
                for (acc, g) in summed.iter_mut().zip(grads) {
                    acc.iter_mut().zip(g).for_each(|(a, g)| *a += g);
                }
            }
            for ((_, tensor), mut g) in current.params.iter_mut().zip(summed) {
                g.iter_mut().for_each(|v| *v *= scale);
                tensor.set_grad(g)?;
            }
            adam_step(&mut current.params, &mut adam, train_config)?;
        }
        let (val_loss, val_accuracy) = validation_pass(&current, &val_data)?;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_total / train_data.len() as f64,
            val_loss,
            val_accuracy,
        });
        if val_loss < best_loss {
            best_loss = val_loss;
            best = current.clone();
            log.best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= train_config.patience {
                break;
            }
        }
    }
    best.params.iter_mut().for_each(|(_, t)| t.clear_grad());
    Ok((best, log))
}
