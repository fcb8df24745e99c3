//! Labeled videos: the procedural toy benchmark, split storage, frame
//! directory ingestion, and the distilled dataset with its on-disk layout.

mod distilled;
mod ingest;
mod store;
mod toy;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{Video, VideoShape};

pub use distilled::{
    init_synthetic, load_distilled, load_distilled_checked, save_distilled, DistilledDataset, DistilledSample, InitMethod,
};
pub use ingest::{ingest_frame_directory, resample_indices, FrameLayout, LABELS_FILE};
pub use store::{load_splits, save_splits};
pub use toy::{generate_toy_dataset, ClassSpec, Motion, ShapeKind, ToySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Hard(usize),
    /// Probability distribution over classes.
    Soft(Vec<f64>),
}

impl Label {
    /// Class index, or the argmax of a soft label.
    pub fn class(&self) -> usize {
        match self {
            Label::Hard(c) => *c,
            Label::Soft(p) => argmax(p),
        }
    }

    /// Dense target distribution over `classes`.
    pub fn target(&self, classes: usize) -> Vec<f64> {
        match self {
            Label::Hard(c) => {
                let mut t = vec![0.0; classes];
                t[*c] = 1.0;
                t
            }
            Label::Soft(p) => p.clone(),
        }
    }
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSample {
    pub id: String,
    pub video: Video,
    pub label: Label,
}

impl VideoSample {
    pub fn check(&self, classes: usize) -> Result<()> {
        if !self.video.in_unit_range() {
            return Err(Error::Data(format!("{}: pixels outside [0, 1]", self.id)));
        }
        match &self.label {
            Label::Hard(c) if *c >= classes => Err(Error::Data(format!("{}: class {c} >= {classes}", self.id))),
            Label::Soft(p) if p.len() != classes || (p.iter().sum::<f64>() - 1.0).abs() > 1e-6 => {
                Err(Error::Data(format!("{}: soft label is not a distribution over {classes} classes", self.id)))
            }
            _ => Ok(()),
        }
    }
}

/// Train / validation / test partition of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub shape: VideoShape,
    pub class_names: Vec<String>,
    pub train: Vec<VideoSample>,
    pub val: Vec<VideoSample>,
    pub test: Vec<VideoSample>,
}

impl Splits {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    /// Keeps only the listed classes, relabelled `0..keep.len()` in order.
    pub fn subset(&self, keep: &[usize]) -> Splits {
        let remap = |samples: &[VideoSample]| -> Vec<VideoSample> {
            samples
                .iter()
                .filter_map(|s| {
                    keep.iter().position(|&k| k == s.label.class()).map(|new| VideoSample {
                        id: s.id.clone(),
                        video: s.video.clone(),
                        label: Label::Hard(new),
                    })
                })
                .collect()
        };
        Splits {
            shape: self.shape,
            class_names: keep.iter().map(|&k| self.class_names[k].clone()).collect(),
            train: remap(&self.train),
            val: remap(&self.val),
            test: remap(&self.test),
        }
    }
}

/// Samples of `set` grouped by class index.
pub fn by_class(set: &[VideoSample], classes: usize) -> Vec<Vec<&VideoSample>> {
    let mut groups = vec![Vec::new(); classes];
    for s in set {
        groups[s.label.class()].push(s);
    }
    groups
}
