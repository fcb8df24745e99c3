use serde::{Deserialize, Serialize};

use super::loss::distill_loss;
use crate::datasets::{init_synthetic, DistilledDataset, InitMethod, VideoSample};
use crate::error::{Error, Result};
use crate::models::checkpoint::{hex_digest, to_bytes};
use crate::models::Model;
use crate::saliency::{apply_mask_in_place, gated_augment, AugmentSpec, EpsilonRule, PartnerRule, SaliencyProfile, WindowSpec};
use crate::seed;
use crate::tensor::Tensor;
use crate::video::{self, Video};

/// How synthetic videos are grouped into batches for BN statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One batch per class holding that class's `ipc` videos.
    PerClass,
    /// A single batch with every synthetic video.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub iterations: usize,
    pub lr: f64,
    pub r_bn: f64,
    pub ce_weight: f64,
    pub window: WindowSpec,
    pub epsilon: EpsilonRule,
    pub init: InitMethod,
    pub ipc: usize,
    pub grouping: Grouping,
    /// Saliency-masked updates; when off the mask is all ones.
    pub tsgf_o: bool,
    /// Saliency-gated augmentation of the final videos.
    pub tsgf_a: bool,
    pub augment: AugmentSpec,
    /// Heavy-ball coefficient; `None` is plain gradient descent.
    pub momentum: Option<f64>,
    pub recalibrate: bool,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            iterations: 1000,
            lr: 0.25,
            r_bn: 0.005,
            ce_weight: 1.0,
            window: WindowSpec::default(),
            epsilon: EpsilonRule::default(),
            init: InitMethod::Real,
            ipc: 5,
            grouping: Grouping::PerClass,
            tsgf_o: true,
            tsgf_a: true,
            augment: AugmentSpec::default(),
            momentum: None,
            recalibrate: true,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations == 0 {
            return bad("distillation needs at least one iteration".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be finite and non-negative", self.lr));
        }
        if !(self.r_bn >= 0.0) || !(self.ce_weight >= 0.0) {
            return bad(format!("r_bn {} and ce_weight {} must be non-negative", self.r_bn, self.ce_weight));
        }
        if self.ipc == 0 {
            return bad("ipc must be at least 1".into());
        }
        if let Some(m) = self.momentum {
            if !(0.0..1.0).contains(&m) {
                return bad(format!("momentum {m} outside [0, 1)"));
            }
        }
        self.epsilon.validate()?;
        self.augment.validate()
    }
}

/// One row of the run log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub ce: f64,
    pub reg: f64,
    pub mean_mask: f64,
    pub min_pixel: f64,
    pub max_pixel: f64,
}

pub const RUN_LOG_HEADER: &str = "iteration,ce,reg,mean_mask,min_pixel,max_pixel";

impl IterationLog {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{},{}", self.iteration, self.ce, self.reg, self.mean_mask, self.min_pixel, self.max_pixel)
    }
}

/// What an observer sees after each update.
pub struct StepView<'a> {
    pub iteration: usize,
    pub before: &'a [Video],
    pub after: &'a [Video],
    pub masks: &'a [Vec<f64>],
    pub log: &'a IterationLog,
}

pub type Observer<'a> = dyn FnMut(&StepView<'_>) + 'a;

#[derive(Debug, Clone)]
pub struct Distillation {
    pub dataset: DistilledDataset,
    pub log: Vec<IterationLog>,
    /// CE and regularization terms, summed over batches, on the final pixels
    /// before augmentation.
    pub final_ce: f64,
    pub final_reg: f64,
}

impl Distillation {
    pub fn log_csv(&self) -> String {
        let mut out = String::from(RUN_LOG_HEADER);
        out.push('\n');
        for row in &self.log {
            out.push_str(&row.csv_row());
            out.push('\n');
        }
        out
    }
}

fn groups(ds: &DistilledDataset, grouping: Grouping) -> Vec<Vec<usize>> {
    match grouping {
        Grouping::All => vec![(0..ds.len()).collect()],
        Grouping::PerClass => (0..ds.classes())
            .map(|c| (0..ds.len()).filter(|&i| ds.samples[i].class == c).collect())
            .filter(|g: &Vec<usize>| !g.is_empty())
            .collect(),
    }
}

/// Loss over every batch and the pixel gradient of each video.
fn evaluate(
    videos: &[Video],
    classes: &[usize],
    batches: &[Vec<usize>],
    teacher: &Model,
    cfg: &DistillConfig,
    iteration: usize,
) -> Result<(f64, f64, Vec<Vec<f64>>)> {
    let (mut ce, mut reg) = (0.0, 0.0);
    let mut grads = vec![Vec::new(); videos.len()];
    for batch in batches {
        let stacked = video::stack(batch.iter().map(|&i| &videos[i]))?;
        let x = Tensor::param(stacked.shape().to_vec(), stacked.to_vec())?;
        let labels: Vec<usize> = batch.iter().map(|&i| classes[i]).collect();
        let terms = distill_loss(&x, &labels, teacher, cfg.r_bn, cfg.ce_weight)?;
        if !terms.total.item().is_finite() {
            return Err(Error::Diverged {
                stage: "distill",
                step: iteration,
                detail: format!("loss ce={} reg={}", terms.ce, terms.reg),
            });
        }
        terms.total.backward()?;
        let g = x.grad().expect("synthetic pixels require grad");
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::Diverged { stage: "distill", step: iteration, detail: format!("pixel gradient {bad}") });
        }
        let per = g.len() / batch.len();
        for (k, &i) in batch.iter().enumerate() {
            grads[i] = g[k * per..(k + 1) * per].to_vec();
        }
        ce += terms.ce;
        reg += terms.reg;
    }
    Ok((ce, reg, grads))
}

fn pixel_range(videos: &[Video]) -> (f64, f64) {
    videos
        .iter()
        .flat_map(|v| v.data())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)))
}

/// Optimizes the synthetic videos of `init` against the frozen `teacher`:
/// each iteration computes the loss per batch, masks each video's pixel
/// gradient by the saliency of its current pixels, and takes a clamped
/// descent step. Afterwards the videos are optionally augmented under the
/// saliency gate and relabelled with the teacher's soft predictions.
pub fn distill(
    init: DistilledDataset,
    teacher: &Model,
    cfg: &DistillConfig,
    mut observer: Option<&mut Observer<'_>>,
) -> Result<Distillation> {
    cfg.validate()?;
    init.validate()?;
    let spec = teacher.input();
    if init.shape.dims() != [spec.frames, spec.channels, spec.height, spec.width] || init.classes() != spec.classes {
        return Err(Error::shape(
            "distill",
            format!("synthetic videos {:?} with {} classes vs teacher input {spec:?}", init.shape.dims(), init.classes()),
        ));
    }
    let mut ds = init;
    let batches = groups(&ds, cfg.grouping);
    let classes: Vec<usize> = ds.samples.iter().map(|s| s.class).collect();
    let mut videos: Vec<Video> = ds.samples.iter().map(|s| s.video.clone()).collect();
    let mut velocity: Vec<Vec<f64>> = match cfg.momentum {
        Some(_) => videos.iter().map(|v| vec![0.0; v.data().len()]).collect(),
        None => Vec::new(),
    };
    let mut log = Vec::with_capacity(cfg.iterations);

    for k in 0..cfg.iterations {
        let (ce, reg, mut grads) = evaluate(&videos, &classes, &batches, teacher, cfg, k)?;
        let masks: Vec<Vec<f64>> = videos
            .iter()
            .map(|v| {
                if cfg.tsgf_o {
                    SaliencyProfile::compute(v, &cfg.window, &cfg.epsilon).mask
                } else {
                    vec![1.0; v.frames()]
                }
            })
            .collect();
        let before = observer.as_ref().map(|_| videos.clone());
        for (i, v) in videos.iter_mut().enumerate() {
            // With momentum the velocity accumulates unmasked gradients and
            // the mask applies to the step taken.
            let mut step = match cfg.momentum {
                Some(mu) => {
                    for (vel, g) in velocity[i].iter_mut().zip(&grads[i]) {
                        *vel = mu * *vel + g;
                    }
                    velocity[i].clone()
                }
                None => std::mem::take(&mut grads[i]),
            };
            apply_mask_in_place(&mut step, &masks[i]);
            let frame = v.frame_len();
            for (t, &m) in masks[i].iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                let span = t * frame..(t + 1) * frame;
                for (p, g) in v.data_mut()[span.clone()].iter_mut().zip(&step[span]) {
                    *p = (*p - cfg.lr * g).clamp(0.0, 1.0);
                }
            }
        }
        let (min_pixel, max_pixel) = pixel_range(&videos);
        let mean_mask = masks.iter().flatten().sum::<f64>() / masks.iter().map(Vec::len).sum::<usize>().max(1) as f64;
        let row = IterationLog { iteration: k, ce, reg, mean_mask, min_pixel, max_pixel };
        log::debug!("{RUN_LOG_HEADER}: {}", row.csv_row());
        if !(0.0..=1.0).contains(&min_pixel) || !(0.0..=1.0).contains(&max_pixel) {
            return Err(Error::Invariant(format!("pixels left [0, 1] at iteration {k}")));
        }
        if let (Some(obs), Some(before)) = (observer.as_deref_mut(), before.as_ref()) {
            obs(&StepView { iteration: k, before, after: &videos, masks: &masks, log: &row });
        }
        log.push(row);
    }
    let (final_ce, final_reg, _) = evaluate(&videos, &classes, &batches, teacher, cfg, cfg.iterations)?;

    for (s, v) in ds.samples.iter_mut().zip(&videos) {
        s.profile = Some(SaliencyProfile::compute(v, &cfg.window, &cfg.epsilon));
    }
    if cfg.tsgf_a {
        augment_in_place(&mut videos, &ds, cfg)?;
    }
    for (s, v) in ds.samples.iter_mut().zip(videos) {
        s.video = v;
    }
    ds.teacher_hash = Some(hex_digest(&to_bytes(teacher)));
    ds.config = serde_json::to_value(cfg).expect("config serializes");
    if cfg.recalibrate {
        ds = recalibrate_labels(ds, teacher)?;
    }
    ds.validate()?;
    Ok(Distillation { dataset: ds, log, final_ce, final_reg })
}

/// Gated augmentation of every video with a partner drawn from the
/// pre-augmentation set.
fn augment_in_place(videos: &mut [Video], ds: &DistilledDataset, cfg: &DistillConfig) -> Result<()> {
    let mut rng = seed::rng(seed::derive(cfg.seed, "augment"));
    let snapshot = videos.to_vec();
    for (i, v) in videos.iter_mut().enumerate() {
        let candidates: Vec<usize> = (0..snapshot.len())
            .filter(|&j| {
                j != i
                    && match cfg.augment.partner {
                        PartnerRule::DifferentClass => ds.samples[j].class != ds.samples[i].class,
                        PartnerRule::AnyOther => true,
                    }
            })
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let partner = &snapshot[candidates[rand::Rng::random_range(&mut rng, 0..candidates.len())]];
        let profile = ds.samples[i].profile.as_ref().expect("profiles computed before augmentation");
        *v = gated_augment(v, &profile.saliency, profile.epsilon, partner, &cfg.augment, &mut rng)?.video;
    }
    Ok(())
}

/// Replaces every label with the teacher's eval-mode softmax output. The
/// synthesis class stays in `class`.
pub fn recalibrate_labels(mut ds: DistilledDataset, teacher: &Model) -> Result<DistilledDataset> {
    let classes = teacher.input().classes;
    for chunk in ds.samples.chunks_mut(64) {
        let probs = teacher.predict(&video::stack(chunk.iter().map(|s| &s.video))?)?.softmax();
        for (s, p) in chunk.iter_mut().zip(probs.data().chunks(classes)) {
            s.soft_label = Some(p.to_vec());
        }
    }
    ds.recalibrated = true;
    Ok(ds)
}

/// Initializes per `cfg.init` from the real train split, then distills.
pub fn distill_from_train(
    train: &[VideoSample],
    class_names: &[String],
    teacher: &Model,
    cfg: &DistillConfig,
    observer: Option<&mut Observer<'_>>,
) -> Result<Distillation> {
    cfg.validate()?;
    let init = init_synthetic(cfg.init, train, class_names, cfg.ipc, seed::derive(cfg.seed, "init"))?;
    distill(init, teacher, cfg, observer)
}
