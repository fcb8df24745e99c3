//! File-based pipeline stages. Each stage reads its inputs from and writes
//! its outputs under one run directory:
//!
//! ```text
//! <out>/config.json            resolved configuration
//! <out>/data/                  real splits
//! <out>/teacher/teacher.ckpt   teacher checkpoint, plus report.json
//! <out>/distilled/             distilled set, plus run_log.csv
//! <out>/eval/                  report.csv, report.json, summary.txt
//! <out>/ablation/<suite>.csv   one table per ablation suite
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::datasets::{generate_toy_dataset, load_distilled_checked, load_splits, save_distilled, save_splits, Splits};
use crate::distiller::{distill_from_train, train_teacher, Distillation, TrainedTeacher};
use crate::error::{Error, Result};
use crate::eval::{baseline_random_select, run_ablation, train_student, AblationContext, AblationSuite, AblationTable, EvalReport};
use crate::models::{checkpoint, Model};
use crate::saliency::SaliencyProfile;
use crate::train::accuracy;
use crate::video::Video;

pub const GEN_DATA: &str = "gen-data";
pub const TRAIN_TEACHER: &str = "train-teacher";
pub const DISTILL: &str = "distill";

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Layout {
        Layout { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn teacher_dir(&self) -> PathBuf {
        self.root.join("teacher")
    }

    pub fn teacher_checkpoint(&self) -> PathBuf {
        self.teacher_dir().join("teacher.ckpt")
    }

    pub fn distilled(&self) -> PathBuf {
        self.root.join("distilled")
    }

    pub fn run_log(&self) -> PathBuf {
        self.distilled().join("run_log.csv")
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn ablation(&self) -> PathBuf {
        self.root.join("ablation")
    }
}

fn require(path: PathBuf, stage: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact { path, stage })
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write(path, serde_json::to_string_pretty(value).expect("report serializes") + "\n")
}

/// A stage bound to a resolved configuration and its run directory.
pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub layout: Layout,
}

#[derive(Debug, Clone, Serialize)]
pub struct TeacherReport {
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: f64,
    pub epoch_losses: Vec<f64>,
    pub checkpoint_sha256: String,
}

impl Pipeline {
    /// Resolves stage seeds from the global seed.
    pub fn new(cfg: &PipelineConfig) -> Result<Pipeline> {
        let cfg = cfg.resolved();
        cfg.validate()?;
        let layout = Layout::new(&cfg.output_dir);
        Ok(Pipeline { cfg, layout })
    }

    fn record_config(&self) -> Result<()> {
        fs::create_dir_all(&self.layout.root).map_err(|e| Error::io(&self.layout.root, e))?;
        self.cfg.save(&self.layout.config())
    }

    pub fn load_splits(&self) -> Result<Splits> {
        load_splits(&require(self.layout.data(), GEN_DATA)?)
    }

    pub fn load_teacher(&self) -> Result<Model> {
        checkpoint::load(&require(self.layout.teacher_checkpoint(), TRAIN_TEACHER)?)
    }

    pub fn gen_data(&self) -> Result<Splits> {
        self.record_config()?;
        let splits = generate_toy_dataset(&self.cfg.dataset)?;
        save_splits(&splits, &self.layout.data())?;
        log::info!(
            "wrote {} train / {} val / {} test videos to {}",
            splits.train.len(),
            splits.val.len(),
            splits.test.len(),
            self.layout.data().display()
        );
        Ok(splits)
    }

    pub fn train_teacher(&self) -> Result<(TrainedTeacher, TeacherReport)> {
        let splits = self.load_splits()?;
        self.record_config()?;
        let trained = train_teacher(&splits.train, &splits.val, self.cfg.teacher_architecture()?, &self.cfg.teacher)?;
        let path = self.layout.teacher_checkpoint();
        fs::create_dir_all(self.layout.teacher_dir()).map_err(|e| Error::io(self.layout.teacher_dir(), e))?;
        checkpoint::save(&trained.model, &path)?;
        let report = TeacherReport {
            train_accuracy: trained.train_accuracy,
            val_accuracy: trained.val_accuracy,
            test_accuracy: accuracy(&trained.model, &splits.test)?,
            epoch_losses: trained.epochs.iter().map(|e| e.loss).collect(),
            checkpoint_sha256: checkpoint::file_hash(&path)?,
        };
        write_json(&self.layout.teacher_dir().join("report.json"), &report)?;
        log::info!("teacher test accuracy {:.3}", report.test_accuracy);
        Ok((trained, report))
    }

    pub fn distill(&self) -> Result<Distillation> {
        let splits = self.load_splits()?;
        let teacher = self.load_teacher()?;
        self.record_config()?;
        let out = distill_from_train(&splits.train, &splits.class_names, &teacher, &self.cfg.distill, None)?;
        save_distilled(&out.dataset, &self.layout.distilled())?;
        write(&self.layout.run_log(), out.log_csv())?;
        log::info!(
            "distilled {} videos; loss ce {:.4} reg {:.4} after {} iterations",
            out.dataset.len(),
            out.final_ce,
            out.final_reg,
            self.cfg.distill.iterations
        );
        Ok(out)
    }

    /// Trains students on the distilled set (and, with `baseline`, on a
    /// random real selection of the same size) and scores them on the test
    /// split.
    pub fn evaluate(&self, baseline: bool) -> Result<Vec<EvalReport>> {
        let dir = require(self.layout.distilled(), DISTILL)?;
        let teacher = require(self.layout.teacher_checkpoint(), TRAIN_TEACHER)?;
        let (ds, _warning) = load_distilled_checked(&dir, &teacher)?;
        let splits = self.load_splits()?;
        self.record_config()?;
        let model = self.load_teacher()?;
        let mut reports = vec![train_student("distilled", &ds, &splits.test, &self.cfg.eval, Some(&model))?.report];
        if baseline {
            let random = baseline_random_select(&splits.train, &splits.class_names, ds.ipc, self.cfg.distill.seed)?;
            reports.push(train_student("random_select", &random, &splits.test, &self.cfg.eval, Some(&model))?.report);
        }
        let mut csv = format!("{}\n", EvalReport::CSV_HEADER);
        let mut summary = String::new();
        for r in &reports {
            csv.push_str(&r.csv_row());
            csv.push('\n');
            summary.push_str(&r.summary());
            summary.push('\n');
        }
        write(&self.layout.eval().join("report.csv"), csv)?;
        write(&self.layout.eval().join("summary.txt"), &summary)?;
        write_json(&self.layout.eval().join("report.json"), &reports)?;
        Ok(reports)
    }

    pub fn ablate(&self, suites: &[AblationSuite]) -> Result<Vec<AblationTable>> {
        let splits = self.load_splits()?;
        let teacher = self.load_teacher()?;
        self.record_config()?;
        let ctx = AblationContext {
            splits: &splits,
            teacher: &teacher,
            teacher_cfg: self.cfg.teacher,
            teacher_widths: self.cfg.teacher_widths.clone(),
            distill: self.cfg.distill.clone(),
            eval: self.cfg.eval.clone(),
            ipcs: self.cfg.ablation.ipcs.clone(),
            frames: self.cfg.ablation.frames.clone(),
        };
        let mut tables = Vec::new();
        for &suite in suites {
            let table = run_ablation(suite, &ctx)?;
            write(&self.layout.ablation().join(format!("{suite}.csv")), table.to_csv())?;
            write_json(&self.layout.ablation().join(format!("{suite}.json")), &table)?;
            log::info!("{}", table.summary());
            tables.push(table);
        }
        Ok(tables)
    }

    /// Saliency profiles of the selected videos: a tensor file, ids from the
    /// distilled set or the splits, or every distilled video.
    pub fn inspect_saliency(&self, video_file: Option<&Path>, ids: &[String]) -> Result<Vec<(String, SaliencyProfile)>> {
        let (window, rule) = (&self.cfg.distill.window, &self.cfg.distill.epsilon);
        let profile = |v: &Video| SaliencyProfile::compute(v, window, rule);
        if let Some(path) = video_file {
            let t = crate::tensor::io::load(path)?;
            let video = match t.rank() {
                4 => Video::from_tensor(&t)?,
                5 if t.shape()[0] == 1 => Video::from_tensor(&t.reshape(t.shape()[1..].to_vec())?)?,
                _ => return Err(Error::shape("inspect_saliency", format!("expected [T, C, H, W], got {:?}", t.shape()))),
            };
            return Ok(vec![(path.display().to_string(), profile(&video))]);
        }
        let distilled = self.layout.distilled();
        let ds = if distilled.exists() { Some(crate::datasets::load_distilled(&distilled)?) } else { None };
        if ids.is_empty() {
            let ds = ds.ok_or(Error::MissingArtifact { path: distilled, stage: DISTILL })?;
            return Ok(ds.samples.iter().map(|s| (s.id.clone(), profile(&s.video))).collect());
        }
        let splits = if self.layout.data().exists() { Some(self.load_splits()?) } else { None };
        ids.iter()
            .map(|id| {
                let from_ds = ds.as_ref().and_then(|d| d.samples.iter().find(|s| &s.id == id)).map(|s| &s.video);
                let from_splits = splits
                    .as_ref()
                    .and_then(|s| s.train.iter().chain(&s.val).chain(&s.test).find(|s| &s.id == id))
                    .map(|s| &s.video);
                from_ds
                    .or(from_splits)
                    .map(|v| (id.clone(), profile(v)))
                    .ok_or_else(|| Error::Data(format!("no video with id {id:?} in the distilled set or splits")))
            })
            .collect()
    }

    /// gen-data, train-teacher, distill and evaluate in sequence.
    pub fn run_all(&self) -> Result<Vec<EvalReport>> {
        self.gen_data()?;
        self.train_teacher()?;
        self.distill()?;
        self.evaluate(true)
    }
}
