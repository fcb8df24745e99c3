//! Pipeline configuration: one JSON file describing every stage.
//!
//! Missing fields take their built-in defaults, and every stage seed is
//! derived from the global `seed`, so a config file only needs the values
//! it changes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::ToySpec;
use crate::distiller::{DistillConfig, TeacherTrainConfig};
use crate::error::{Error, Result};
use crate::eval::{AblationSuite, EvalConfig, StudentAugment};
use crate::models::{ArchKind, Architecture, InputSpec};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub suites: Vec<AblationSuite>,
    pub ipcs: Vec<usize>,
    pub frames: Vec<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig { suites: AblationSuite::ALL.to_vec(), ipcs: vec![1, 5, 10], frames: vec![1, 4, 8, 16] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: ToySpec,
    /// MiniC3D stage widths of the teacher.
    pub teacher_widths: Vec<usize>,
    pub teacher: TeacherTrainConfig,
    pub distill: DistillConfig,
    pub eval: EvalConfig,
    pub ablation: AblationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            dataset: ToySpec::default(),
            teacher_widths: vec![16, 32, 64],
            teacher: TeacherTrainConfig::default(),
            distill: DistillConfig::default(),
            eval: EvalConfig { augment: StudentAugment::Gated, ..Default::default() },
            ablation: AblationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 8 classes, 16 frames of 32x32, widths 16/32/64, K = 1000.
    Default,
    /// 8 frames of 16x16, widths 8/16/32, K = 200 at step 0.5; minutes on one core.
    Compact,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Preset::Default),
            "compact" => Ok(Preset::Compact),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected default or compact)"))),
        }
    }
}

impl PipelineConfig {
    pub fn preset(p: Preset) -> PipelineConfig {
        match p {
            Preset::Default => PipelineConfig::default(),
            Preset::Compact => {
                let widths = vec![8, 16, 32];
                PipelineConfig {
                    output_dir: PathBuf::from("runs/compact"),
                    dataset: ToySpec::compact(),
                    teacher_widths: widths.clone(),
                    teacher: TeacherTrainConfig { epochs: 20, ..Default::default() },
                    // A fifth of the default iterations, partly made up by a larger step.
                    distill: DistillConfig { iterations: 200, lr: 0.5, ..Default::default() },
                    eval: EvalConfig { widths, augment: StudentAugment::Gated, ..Default::default() },
                    ..PipelineConfig::default()
                }
            }
        }
    }

    /// Reads a config file; absent fields keep their defaults.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("config serializes") + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Copy with every stage seed derived from the global seed.
    pub fn resolved(&self) -> PipelineConfig {
        let mut c = self.clone();
        c.dataset.seed = seed::derive(self.seed, "dataset");
        c.teacher.seed = seed::derive(self.seed, "teacher");
        c.distill.seed = seed::derive(self.seed, "distill");
        c.distill.augment.seed = seed::derive(self.seed, "augment");
        let eval = seed::derive(self.seed, "eval");
        c.eval.seeds = (0..self.eval.seeds.len() as u64).map(|i| seed::derive_index(eval, i)).collect();
        // Gated augmentation is the student half of tsgf_a.
        if !c.distill.tsgf_a && c.eval.augment == StudentAugment::Gated {
            c.eval.augment = StudentAugment::None;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.teacher.fit_config().validate()?;
        self.distill.validate()?;
        self.eval.validate()?;
        self.teacher_architecture().map(|_| ())
    }

    pub fn input(&self) -> InputSpec {
        let d = &self.dataset;
        InputSpec { frames: d.frames, channels: 1, height: d.height, width: d.width, classes: d.classes.len() }
    }

    pub fn teacher_architecture(&self) -> Result<Architecture> {
        Architecture::with_widths(ArchKind::MiniC3D, self.input(), &self.teacher_widths)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        crate::models::checkpoint::hex_digest(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
