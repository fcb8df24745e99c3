use serde::{Deserialize, Serialize};

use super::{train_student, EvalConfig, EvalReport, StudentAugment};
use crate::datasets::{by_class, resample_indices, DistilledDataset, InitMethod, Splits, VideoSample};
use crate::distiller::{distill_from_train, train_teacher, DistillConfig, TeacherTrainConfig};
use crate::error::{Error, Result};
use crate::models::{ArchKind, Architecture, InputSpec, Model};
use crate::saliency::frame_differences;
use crate::video::{Video, VideoShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationSuite {
    Init,
    Ipc,
    Augmentation,
    Components,
    Frames,
    StaticDynamic,
}

impl AblationSuite {
    pub const ALL: [AblationSuite; 6] = [
        AblationSuite::Init,
        AblationSuite::Ipc,
        AblationSuite::Augmentation,
        AblationSuite::Components,
        AblationSuite::Frames,
        AblationSuite::StaticDynamic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AblationSuite::Init => "init",
            AblationSuite::Ipc => "ipc",
            AblationSuite::Augmentation => "augmentation",
            AblationSuite::Components => "components",
            AblationSuite::Frames => "frames",
            AblationSuite::StaticDynamic => "static_dynamic",
        }
    }
}

impl std::str::FromStr for AblationSuite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationSuite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation suite {s:?}")))
    }
}

impl std::fmt::Display for AblationSuite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a suite may need. `teacher` was trained on `splits`; suites
/// that change the data (frames, static_dynamic) train their own teachers
/// with `teacher_cfg`.
pub struct AblationContext<'a> {
    pub splits: &'a Splits,
    pub teacher: &'a Model,
    pub teacher_cfg: TeacherTrainConfig,
    pub teacher_widths: Vec<usize>,
    pub distill: DistillConfig,
    pub eval: EvalConfig,
    pub ipcs: Vec<usize>,
    pub frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub suite: AblationSuite,
    pub rows: Vec<AblationRow>,
    pub notes: Vec<String>,
}

impl AblationTable {
    pub fn row(&self, label: &str) -> Option<&EvalReport> {
        self.rows.iter().find(|r| r.label == label).map(|r| &r.report)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("suite,label,{}\n", EvalReport::CSV_HEADER);
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", self.suite, r.label, r.report.csv_row()));
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!("ablation: {}\n", self.suite);
        for r in &self.rows {
            out.push_str(&format!("  {:<24} {:5.1} ± {:.1}\n", r.label, 100.0 * r.report.mean, 100.0 * r.report.std));
        }
        for n in &self.notes {
            out.push_str(&format!("  note: {n}\n"));
        }
        out
    }
}

/// Sets both saliency components. TSGF_A covers the one-shot gated
/// augmentation at the end of distillation and gated augmentation of
/// student batches.
pub fn with_components(distill: &DistillConfig, eval: &EvalConfig, o: bool, a: bool) -> (DistillConfig, EvalConfig) {
    let d = DistillConfig { tsgf_o: o, tsgf_a: a, ..distill.clone() };
    let e = EvalConfig { augment: if a { StudentAugment::Gated } else { StudentAugment::None }, ..eval.clone() };
    (d, e)
}

fn distill_eval(label: &str, splits: &Splits, teacher: &Model, d: &DistillConfig, e: &EvalConfig) -> Result<(DistilledDataset, AblationRow)> {
    let out = distill_from_train(&splits.train, &splits.class_names, teacher, d, None)?;
    // Post-distillation, only the held-out test split is read.
    let run = train_student(label, &out.dataset, &splits.test, e, Some(teacher))?;
    Ok((out.dataset, AblationRow { label: label.to_string(), report: run.report }))
}

/// Mean inter-frame difference of a video.
pub fn motion_energy(video: &Video) -> f64 {
    let d = frame_differences(video);
    d.iter().sum::<f64>() / d.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticDynamicSplit {
    /// Mean motion energy of each class over the train split.
    pub energies: Vec<f64>,
    /// Median of the class energies.
    pub threshold: f64,
    pub static_classes: Vec<usize>,
    pub dynamic_classes: Vec<usize>,
}

impl StaticDynamicSplit {
    pub fn compute(splits: &Splits) -> StaticDynamicSplit {
        let energies: Vec<f64> = by_class(&splits.train, splits.classes())
            .iter()
            .map(|g| g.iter().map(|s| motion_energy(&s.video)).sum::<f64>() / g.len().max(1) as f64)
            .collect();
        let mut sorted = energies.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let threshold = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        let (dynamic_classes, static_classes) = (0..n).partition(|&c| energies[c] > threshold);
        StaticDynamicSplit { energies, threshold, static_classes, dynamic_classes }
    }
}

fn resample_frames(set: &[VideoSample], frames: usize) -> Result<Vec<VideoSample>> {
    set.iter()
        .map(|s| {
            let idx = resample_indices(s.video.frames(), frames);
            let data: Vec<f64> = idx.iter().flat_map(|&i| s.video.frame(i).to_vec()).collect();
            let [_, c, h, w] = s.video.shape();
            Ok(VideoSample { id: s.id.clone(), video: Video::new([frames, c, h, w], data)?, label: s.label.clone() })
        })
        .collect()
}

fn retrain_teacher(ctx: &AblationContext<'_>, splits: &Splits) -> Result<Model> {
    let s = splits.shape;
    let input = InputSpec { frames: s.frames, channels: s.channels, height: s.height, width: s.width, classes: splits.classes() };
    let arch = Architecture::with_widths(ArchKind::MiniC3D, input, &ctx.teacher_widths)?;
    Ok(train_teacher(&splits.train, &splits.val, arch, &ctx.teacher_cfg)?.model)
}

pub fn run_ablation(suite: AblationSuite, ctx: &AblationContext<'_>) -> Result<AblationTable> {
    let (splits, teacher) = (ctx.splits, ctx.teacher);
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    match suite {
        AblationSuite::Components => {
            for (label, o, a) in [("baseline", false, false), ("+tsgf_a", false, true), ("+tsgf_o", true, false), ("+tsgf_o+tsgf_a", true, true)] {
                let (d, e) = with_components(&ctx.distill, &ctx.eval, o, a);
                rows.push(distill_eval(label, splits, teacher, &d, &e)?.1);
            }
        }
        AblationSuite::Init => {
            for init in [InitMethod::Real, InitMethod::Noise] {
                let d = DistillConfig { init, ..ctx.distill.clone() };
                rows.push(distill_eval(&init.to_string(), splits, teacher, &d, &ctx.eval)?.1);
            }
        }
        AblationSuite::Ipc => {
            for &ipc in &ctx.ipcs {
                let d = DistillConfig { ipc, ..ctx.distill.clone() };
                rows.push(distill_eval(&format!("ipc={ipc}"), splits, teacher, &d, &ctx.eval)?.1);
            }
        }
        AblationSuite::Augmentation => {
            let (d, e) = with_components(&ctx.distill, &ctx.eval, ctx.distill.tsgf_o, false);
            rows.push(distill_eval("none", splits, teacher, &d, &e)?.1);
            let e_fi = EvalConfig { augment: StudentAugment::FrameIndependent, ..e.clone() };
            rows.push(distill_eval("frame_independent", splits, teacher, &d, &e_fi)?.1);
            let (d, e) = with_components(&ctx.distill, &ctx.eval, ctx.distill.tsgf_o, true);
            rows.push(distill_eval("gated", splits, teacher, &d, &e)?.1);
        }
        AblationSuite::Frames => {
            for &t in &ctx.frames {
                if t == 0 {
                    return Err(Error::Config("frame counts must be positive".into()));
                }
                let sub = Splits {
                    shape: VideoShape { frames: t, ..splits.shape },
                    class_names: splits.class_names.clone(),
                    train: resample_frames(&splits.train, t)?,
                    val: resample_frames(&splits.val, t)?,
                    test: resample_frames(&splits.test, t)?,
                };
                let teacher = retrain_teacher(ctx, &sub)?;
                rows.push(distill_eval(&format!("frames={t}"), &sub, &teacher, &ctx.distill, &ctx.eval)?.1);
            }
        }
        AblationSuite::StaticDynamic => {
            let split = StaticDynamicSplit::compute(splits);
            notes.push(format!(
                "threshold {:.5}; static classes {:?}; dynamic classes {:?}",
                split.threshold, split.static_classes, split.dynamic_classes
            ));
            for (group, classes) in [("static", &split.static_classes), ("dynamic", &split.dynamic_classes)] {
                if classes.len() < 2 {
                    notes.push(format!("{group} group has fewer than two classes; skipped"));
                    continue;
                }
                let sub = splits.subset(classes);
                let teacher = retrain_teacher(ctx, &sub)?;
                for (label, on) in [("baseline", false), ("tsgf", true)] {
                    let (d, e) = with_components(&ctx.distill, &ctx.eval, on, on);
                    rows.push(distill_eval(&format!("{group}/{label}"), &sub, &teacher, &d, &e)?.1);
                }
            }
        }
    }
    Ok(AblationTable { suite, rows, notes })
}
