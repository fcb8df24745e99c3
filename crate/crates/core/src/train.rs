//! Supervised training of a classifier on labeled videos, shared by the
//! teacher and by students trained on distilled sets.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{argmax, VideoSample};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::optim::{Adam, Schedule};
use crate::seed;
use crate::tensor::Tensor;
use crate::video::{self, Video};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub seed: u64,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight decay {} must be non-negative", self.weight_decay)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    /// Accuracy on the monitored split, when one was given.
    pub monitor_accuracy: Option<f64>,
}

/// One training example as seen by the optimizer: pixels and a target
/// distribution. Batch hooks may rewrite both.
#[derive(Debug, Clone)]
pub struct Example {
    pub video: Video,
    pub target: Vec<f64>,
}

/// Per-batch rewrite applied before the forward pass, e.g. augmentation.
pub type BatchHook<'a> = dyn FnMut(&mut ChaCha8Rng, &mut [Example]) + 'a;

/// Mean over the batch of `-sum_c target_c * log softmax(logits)_c`.
pub fn soft_cross_entropy(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    if logits.shape() != targets.shape() || logits.rank() != 2 {
        return Err(Error::shape(
            "soft_cross_entropy",
            format!("logits {:?} vs targets {:?}", logits.shape(), targets.shape()),
        ));
    }
    let b = logits.shape()[0].max(1) as f64;
    Ok(logits.log_softmax().mul(targets)?.sum().mul_scalar(-1.0 / b))
}

pub fn targets_tensor(targets: &[Vec<f64>]) -> Result<Tensor> {
    let classes = targets.first().map_or(0, Vec::len);
    Tensor::new(vec![targets.len(), classes], targets.concat())
}

/// Trains `model` in place. Returns per-epoch mean loss.
pub fn fit(
    model: &mut Model,
    samples: &[VideoSample],
    cfg: &FitConfig,
    stage: &'static str,
    mut hook: Option<&mut BatchHook<'_>>,
    monitor: Option<&[VideoSample]>,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Data(format!("{stage}: empty training set")));
    }
    let classes = model.input().classes;
    for s in samples {
        s.check(classes)?;
    }
    let mut rng = seed::rng(cfg.seed);
    let mut opt = Adam::new(model.params().iter().map(|p| p.value.len()), cfg.weight_decay);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.schedule.rate(cfg.lr, epoch, cfg.epochs);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch: Vec<Example> = chunk
                .iter()
                .map(|&i| Example { video: samples[i].video.clone(), target: samples[i].label.target(classes) })
                .collect();
            if let Some(h) = hook.as_deref_mut() {
                h(&mut rng, &mut batch);
            }
            let x = video::stack(batch.iter().map(|e| &e.video))?;
            let y = targets_tensor(&batch.iter().map(|e| e.target.clone()).collect::<Vec<_>>())?;
            let bound = model.bind(true);
            let fwd = model.forward_train(&bound, &x)?;
            let loss = soft_cross_entropy(&fwd.logits, &y)?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::Diverged { stage, step, detail: format!("loss {value} in epoch {epoch}") });
            }
            loss.backward()?;
            let grads = bound.grads();
            if let Some(bad) = grads.iter().flatten().find(|g| !g.is_finite()) {
                return Err(Error::Diverged { stage, step, detail: format!("gradient {bad} in epoch {epoch}") });
            }
            opt.step(lr, model.params_mut().iter_mut().map(|p| &mut p.value), &grads);
            total += value * chunk.len() as f64;
            step += 1;
        }
        let monitor_accuracy = monitor.map(|m| accuracy(model, m)).transpose()?;
        let log = EpochLog { epoch, loss: total / samples.len() as f64, monitor_accuracy };
        log::debug!("{stage} epoch {epoch}: loss {:.5}", log.loss);
        logs.push(log);
    }
    Ok(logs)
}

/// Eval-mode class predictions.
pub fn predict_classes(model: &Model, samples: &[VideoSample]) -> Result<Vec<usize>> {
    let classes = model.input().classes;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(64) {
        let logits = model.predict(&video::stack(chunk.iter().map(|s| &s.video))?)?;
        out.extend(logits.data().chunks(classes).map(argmax));
    }
    Ok(out)
}

/// Fraction of `samples` whose label class is the eval-mode argmax.
pub fn accuracy(model: &Model, samples: &[VideoSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Data("accuracy of an empty split is undefined".into()));
    }
    let pred = predict_classes(model, samples)?;
    let hits = pred.iter().zip(samples).filter(|(p, s)| **p == s.label.class()).count();
    Ok(hits as f64 / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_ce_of_uniform_logits_is_ln_c() {
        let logits = Tensor::zeros(vec![2, 4]);
        let y = targets_tensor(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.25; 4]]).unwrap();
        let l = soft_cross_entropy(&logits, &y).unwrap().item();
        assert!((l - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = FitConfig { epochs: 0, lr: 0.01, batch_size: 4, weight_decay: 0.0, schedule: Schedule::Constant, seed: 0 };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
