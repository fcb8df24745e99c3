use serde::{Deserialize, Serialize};

use crate::datasets::VideoSample;
use crate::error::Result;
use crate::models::{Architecture, Model};
use crate::optim::Schedule;
use crate::seed;
use crate::train::{accuracy, fit, EpochLog, FitConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TeacherTrainConfig {
    fn default() -> Self {
        TeacherTrainConfig { epochs: 30, lr: 3e-3, batch_size: 16, weight_decay: 1e-4, seed: 0 }
    }
}

impl TeacherTrainConfig {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            weight_decay: self.weight_decay,
            schedule: Schedule::Cosine,
            seed: seed::derive(self.seed, "shuffle"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedTeacher {
    pub model: Model,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub epochs: Vec<EpochLog>,
}

/// Trains a classifier on real data with mini-batch Adam. Running BN
/// statistics are accumulated along the way.
pub fn train_teacher(
    train: &[VideoSample],
    val: &[VideoSample],
    arch: Architecture,
    cfg: &TeacherTrainConfig,
) -> Result<TrainedTeacher> {
    let fit_cfg = cfg.fit_config();
    fit_cfg.validate()?;
    let mut model = Model::new(arch, seed::derive(cfg.seed, "init"))?;
    let epochs = fit(&mut model, train, &fit_cfg, "train_teacher", None, None)?;
    let train_accuracy = accuracy(&model, train)?;
    let val_accuracy = if val.is_empty() { None } else { Some(accuracy(&model, val)?) };
    log::info!(
        "teacher: final loss {:.4}, train accuracy {train_accuracy:.3}, val accuracy {}",
        epochs.last().map_or(f64::NAN, |e| e.loss),
        val_accuracy.map_or("n/a".to_string(), |v| format!("{v:.3}"))
    );
    Ok(TrainedTeacher { model, train_accuracy, val_accuracy, epochs })
}
