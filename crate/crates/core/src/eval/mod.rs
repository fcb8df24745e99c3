//! Student training on distilled sets, held-out evaluation, the random
//! selection baseline and the ablation battery.

mod ablation;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{argmax, init_synthetic, DistilledDataset, InitMethod, VideoSample};
use crate::error::{Error, Result};
use crate::models::checkpoint::hex_digest;
use crate::models::{ArchKind, Architecture, InputSpec, Model};
use crate::optim::Schedule;
use crate::saliency::{frame_independent_mix, gated_augment, AugmentSpec, EpsilonRule, SaliencyProfile, WindowSpec};
use crate::seed;
use crate::train::{accuracy, fit, EpochLog, Example, FitConfig};
use crate::video;

pub use ablation::{motion_energy, run_ablation, with_components, AblationContext, AblationRow, AblationSuite, AblationTable, StaticDynamicSplit};

/// Augmentation applied to each student mini-batch, drawn afresh every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentAugment {
    None,
    /// Partner pixels pasted into one fixed box on every non-key frame.
    Gated,
    /// A fresh box per frame on every frame, ignoring saliency.
    FrameIndependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub arch: ArchKind,
    /// Stage widths passed to [`Architecture::with_widths`].
    pub widths: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    /// Sets of at most this many samples train full-batch.
    pub batch_size: usize,
    pub weight_decay: f64,
    pub augment: StudentAugment,
    /// Relabel augmented batches with the teacher when one is available.
    pub relabel: bool,
    pub augment_spec: AugmentSpec,
    pub window: WindowSpec,
    pub epsilon: EpsilonRule,
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            arch: ArchKind::MiniC3D,
            widths: vec![16, 32, 64],
            epochs: 200,
            lr: 0.01,
            batch_size: 64,
            weight_decay: 0.0,
            augment: StudentAugment::None,
            relabel: true,
            augment_spec: AugmentSpec::default(),
            window: WindowSpec::default(),
            epsilon: EpsilonRule::default(),
            seeds: vec![0, 1, 2],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("evaluation needs at least one seed".into()));
        }
        self.fit_config(0).validate()?;
        self.augment_spec.validate()?;
        self.epsilon.validate()
    }

    fn fit_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            weight_decay: self.weight_decay,
            schedule: Schedule::Cosine,
            seed: seed::derive(seed, "student-shuffle"),
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex_digest(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub arch: ArchKind,
    pub per_seed: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub config_hash: String,
    pub data_hash: String,
}

impl EvalReport {
    pub fn new(name: impl Into<String>, arch: ArchKind, per_seed: Vec<f64>, config_hash: String, data_hash: String) -> Self {
        let (mean, std) = mean_std(&per_seed);
        EvalReport { name: name.into(), arch, per_seed, mean, std, config_hash, data_hash }
    }

    pub const CSV_HEADER: &'static str = "name,arch,mean,std,per_seed,config_hash,data_hash";

    pub fn csv_row(&self) -> String {
        let seeds: Vec<String> = self.per_seed.iter().map(|a| a.to_string()).collect();
        format!(
            "{},{},{},{},{},{},{}",
            self.name,
            self.arch,
            self.mean,
            self.std,
            seeds.join(";"),
            self.config_hash,
            self.data_hash
        )
    }

    /// `name: 54.2 ± 1.3 (%)` style line.
    pub fn summary(&self) -> String {
        format!("{:<28} {:>22}  {:5.1} ± {:.1}", self.name, self.arch.to_string(), 100.0 * self.mean, 100.0 * self.std)
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trained students (one per seed) and their held-out accuracy.
#[derive(Debug, Clone)]
pub struct StudentRun {
    pub models: Vec<Model>,
    pub report: EvalReport,
    pub curves: Vec<Vec<EpochLog>>,
}

fn input_of(samples: &[VideoSample], classes: usize) -> Result<InputSpec> {
    let first = samples.first().ok_or_else(|| Error::Data("empty training set".into()))?;
    let s = first.video.geometry();
    Ok(InputSpec { frames: s.frames, channels: s.channels, height: s.height, width: s.width, classes })
}

/// Mini-batch hook for the configured student augmentation. Partners are
/// other samples of the same batch with a different argmax label; targets
/// are mixed by the replaced pixel fraction.
/// With a teacher, augmented batches are relabelled by its softmax instead.
fn augmentation_hook<'a>(
    cfg: &'a EvalConfig,
    teacher: Option<&'a Model>,
) -> impl FnMut(&mut rand_chacha::ChaCha8Rng, &mut [Example]) + 'a {
    move |rng, batch| {
        if cfg.augment == StudentAugment::None || batch.len() < 2 {
            return;
        }
        let snapshot: Vec<Example> = batch.to_vec();
        for (i, ex) in batch.iter_mut().enumerate() {
            let own = argmax(&ex.target);
            let partners: Vec<usize> =
                (0..snapshot.len()).filter(|&j| j != i && argmax(&snapshot[j].target) != own).collect();
            if partners.is_empty() {
                continue;
            }
            let p = &snapshot[partners[rng.random_range(0..partners.len())]];
            let (video, lambda) = match cfg.augment {
                StudentAugment::Gated => {
                    let prof = SaliencyProfile::compute(&ex.video, &cfg.window, &cfg.epsilon);
                    let a = gated_augment(&ex.video, &prof.saliency, prof.epsilon, &p.video, &cfg.augment_spec, rng)
                        .expect("batch videos share a shape");
                    let f = a.mixed_fraction();
                    (a.video, f)
                }
                StudentAugment::FrameIndependent => {
                    frame_independent_mix(&ex.video, &p.video, &cfg.augment_spec, rng).expect("batch videos share a shape")
                }
                StudentAugment::None => unreachable!(),
            };
            ex.video = video;
            for (t, pt) in ex.target.iter_mut().zip(&p.target) {
                *t = (1.0 - lambda) * *t + lambda * pt;
            }
        }
        if let Some(t) = teacher {
            let classes = t.input().classes;
            let probs = video::stack(batch.iter().map(|e| &e.video))
                .and_then(|x| t.predict(&x))
                .expect("teacher accepts student batches")
                .softmax();
            for (ex, p) in batch.iter_mut().zip(probs.data().chunks(classes)) {
                ex.target = p.to_vec();
            }
        }
    }
}

/// Trains one student per seed on `samples` and measures accuracy on
/// `test`. `data_hash` identifies the training data in the report.
pub fn evaluate_samples(
    name: &str,
    samples: &[VideoSample],
    classes: usize,
    test: &[VideoSample],
    cfg: &EvalConfig,
    teacher: Option<&Model>,
    data_hash: String,
) -> Result<StudentRun> {
    cfg.validate()?;
    let input = input_of(samples, classes)?;
    let arch = Architecture::with_widths(cfg.arch, input, &cfg.widths)?;
    let mut models = Vec::new();
    let mut per_seed = Vec::new();
    let mut curves = Vec::new();
    for &s in &cfg.seeds {
        let mut model = Model::new(arch.clone(), seed::derive(s, "student-init"))?;
        let mut hook = augmentation_hook(cfg, teacher.filter(|_| cfg.relabel));
        let log = fit(&mut model, samples, &cfg.fit_config(s), "train_student", Some(&mut hook), None)?;
        per_seed.push(accuracy(&model, test)?);
        models.push(model);
        curves.push(log);
    }
    let report = EvalReport::new(name, cfg.arch, per_seed, cfg.hash(), data_hash);
    log::info!("{}", report.summary());
    Ok(StudentRun { models, report, curves })
}

/// Trains students on a distilled set and evaluates them on the held-out
/// real test split. Refuses test data that a synthetic video was copied from.
/// The teacher, if given, only relabels augmented batches.
pub fn train_student(
    name: &str,
    ds: &DistilledDataset,
    test: &[VideoSample],
    cfg: &EvalConfig,
    teacher: Option<&Model>,
) -> Result<StudentRun> {
    if ds.is_empty() {
        return Err(Error::Data("distilled set is empty".into()));
    }
    ds.validate()?;
    let test_ids: std::collections::HashSet<&str> = test.iter().map(|s| s.id.as_str()).collect();
    if let Some(leak) = ds.samples.iter().find_map(|s| s.source_id.as_deref().filter(|id| test_ids.contains(id))) {
        return Err(Error::Invariant(format!("distilled video was initialized from test sample {leak}")));
    }
    evaluate_samples(name, &ds.to_samples(), ds.classes(), test, cfg, teacher, ds.content_hash())
}

/// `ipc` verbatim real videos per class with hard labels.
pub fn baseline_random_select(train: &[VideoSample], class_names: &[String], ipc: usize, seed: u64) -> Result<DistilledDataset> {
    let mut ds = init_synthetic(InitMethod::Real, train, class_names, ipc, seed)?;
    ds.config = serde_json::json!({ "baseline": "random_select", "ipc": ipc, "seed": seed });
    Ok(ds)
}

/// One report per architecture, all trained on the same distilled set.
pub fn cross_architecture_eval(
    ds: &DistilledDataset,
    test: &[VideoSample],
    kinds: &[ArchKind],
    cfg: &EvalConfig,
    teacher: Option<&Model>,
) -> Result<Vec<EvalReport>> {
    kinds
        .iter()
        .map(|&arch| {
            let c = EvalConfig { arch, ..cfg.clone() };
            Ok(train_student(&arch.to_string(), ds, test, &c, teacher)?.report)
        })
        .collect()
}
