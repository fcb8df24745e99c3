//! The synthetic set: per-class videos, their (soft) labels and enough
//! provenance to tell which teacher and configuration produced them.
//!
//! On disk a distilled set is a directory:
//!
//! ```text
//! manifest.json
//! videos/<id>.tsgf      one tensor [T, C, H, W] per synthetic video
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{by_class, Label, VideoSample};
use crate::error::{Error, Result};
use crate::models::checkpoint::{file_hash, hex_digest};
use crate::saliency::SaliencyProfile;
use crate::seed;
use crate::tensor::io;
use crate::video::{Video, VideoShape};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    /// Copies of randomly chosen real training videos.
    Real,
    /// Independent uniform noise in [0, 1).
    Noise,
}

impl std::str::FromStr for InitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(InitMethod::Real),
            "noise" => Ok(InitMethod::Noise),
            other => Err(Error::Config(format!("unknown init method {other:?} (expected real or noise)"))),
        }
    }
}

impl std::fmt::Display for InitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitMethod::Real => "real",
            InitMethod::Noise => "noise",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistilledSample {
    pub id: String,
    /// Class the video was synthesized for; kept after recalibration.
    pub class: usize,
    pub video: Video,
    pub soft_label: Option<Vec<f64>>,
    /// Id of the real video it was initialized from, if any.
    pub source_id: Option<String>,
    pub profile: Option<SaliencyProfile>,
}

impl DistilledSample {
    pub fn label(&self) -> Label {
        match &self.soft_label {
            Some(p) => Label::Soft(p.clone()),
            None => Label::Hard(self.class),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistilledDataset {
    pub shape: VideoShape,
    pub class_names: Vec<String>,
    pub ipc: usize,
    /// Ordered by class, then by index within the class.
    pub samples: Vec<DistilledSample>,
    /// False when label recalibration was skipped; samples then carry hard labels.
    pub recalibrated: bool,
    pub teacher_hash: Option<String>,
    pub config: serde_json::Value,
}

impl DistilledDataset {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let classes = self.classes();
        if self.samples.len() != self.ipc * classes {
            return Err(Error::Data(format!(
                "distilled set has {} samples, expected ipc {} x {} classes",
                self.samples.len(),
                self.ipc,
                classes
            )));
        }
        let mut counts = vec![0usize; classes];
        for s in &self.samples {
            if s.class >= classes {
                return Err(Error::Data(format!("{}: class {} >= {classes}", s.id, s.class)));
            }
            counts[s.class] += 1;
            if s.video.geometry() != self.shape {
                return Err(Error::Data(format!("{}: video shape {:?} != {:?}", s.id, s.video.shape(), self.shape.dims())));
            }
            if self.recalibrated && s.soft_label.is_none() {
                return Err(Error::Data(format!("{}: missing recalibrated soft label", s.id)));
            }
            self.as_video_sample(s).check(classes)?;
        }
        if let Some(c) = counts.iter().position(|&n| n != self.ipc) {
            return Err(Error::Data(format!("class {c} has {} samples, expected {}", counts[c], self.ipc)));
        }
        Ok(())
    }

    fn as_video_sample(&self, s: &DistilledSample) -> VideoSample {
        VideoSample { id: s.id.clone(), video: s.video.clone(), label: s.label() }
    }

    /// Training view: each video with its soft label, or its class when
    /// recalibration was skipped.
    pub fn to_samples(&self) -> Vec<VideoSample> {
        self.samples.iter().map(|s| self.as_video_sample(s)).collect()
    }

    /// SHA-256 over the serialized manifest and every video, in order.
    pub fn content_hash(&self) -> String {
        let (manifest, blobs) = self.serialize();
        let mut all = manifest.into_bytes();
        for b in blobs {
            all.extend_from_slice(&b);
        }
        hex_digest(&all)
    }

    fn serialize(&self) -> (String, Vec<Vec<u8>>) {
        let blobs: Vec<Vec<u8>> = self.samples.iter().map(|s| io::encode(&s.shape_vec(), s.video.data())).collect();
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            ipc: self.ipc,
            classes: self.classes(),
            class_names: self.class_names.clone(),
            shape: self.shape,
            recalibrated: self.recalibrated,
            teacher_hash: self.teacher_hash.clone(),
            config: self.config.clone(),
            samples: self
                .samples
                .iter()
                .zip(&blobs)
                .map(|(s, b)| SampleEntry {
                    id: s.id.clone(),
                    class: s.class,
                    file: format!("videos/{}.tsgf", s.id),
                    sha256: hex_digest(b),
                    soft_label: s.soft_label.clone(),
                    source_id: s.source_id.clone(),
                    profile: s.profile.clone(),
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        (text, blobs)
    }
}

impl DistilledSample {
    fn shape_vec(&self) -> Vec<usize> {
        self.video.shape().to_vec()
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    ipc: usize,
    classes: usize,
    class_names: Vec<String>,
    shape: VideoShape,
    recalibrated: bool,
    teacher_hash: Option<String>,
    config: serde_json::Value,
    samples: Vec<SampleEntry>,
}

#[derive(Serialize, Deserialize)]
struct SampleEntry {
    id: String,
    class: usize,
    file: String,
    sha256: String,
    soft_label: Option<Vec<f64>>,
    source_id: Option<String>,
    profile: Option<SaliencyProfile>,
}

/// Starting point of distillation: `ipc` videos per class.
pub fn init_synthetic(
    method: InitMethod,
    train: &[VideoSample],
    class_names: &[String],
    ipc: usize,
    seed: u64,
) -> Result<DistilledDataset> {
    if ipc == 0 {
        return Err(Error::Config("ipc must be at least 1".into()));
    }
    let first = train.first().ok_or_else(|| Error::Data("cannot initialize from an empty train set".into()))?;
    let shape = first.video.geometry();
    let groups = by_class(train, class_names.len());
    if let Some((c, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < ipc) {
        return Err(Error::Data(format!("class {c} has {} train samples, fewer than ipc {ipc}", g.len())));
    }
    let mut samples = Vec::with_capacity(ipc * class_names.len());
    for (c, group) in groups.iter().enumerate() {
        let mut rng = seed::rng(seed::derive_index(seed, c as u64));
        let picks: Vec<usize> = match method {
            InitMethod::Real => {
                let mut p = index::sample(&mut rng, group.len(), ipc).into_vec();
                p.sort_unstable();
                p
            }
            InitMethod::Noise => Vec::new(),
        };
        for i in 0..ipc {
            let id = format!("syn-c{c:02}-{i:03}");
            let (video, source_id) = match method {
                InitMethod::Real => (group[picks[i]].video.clone(), Some(group[picks[i]].id.clone())),
                InitMethod::Noise => {
                    let data = (0..shape.len()).map(|_| rng.random::<f64>()).collect();
                    (Video::new(shape.dims(), data)?, None)
                }
            };
            samples.push(DistilledSample { id, class: c, video, soft_label: None, source_id, profile: None });
        }
    }
    Ok(DistilledDataset {
        shape,
        class_names: class_names.to_vec(),
        ipc,
        samples,
        recalibrated: false,
        teacher_hash: None,
        config: serde_json::Value::Null,
    })
}

pub fn save_distilled(ds: &DistilledDataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    let videos = dir.join("videos");
    fs::create_dir_all(&videos).map_err(|e| Error::io(&videos, e))?;
    // Clear videos from a previous run so the directory mirrors `ds` exactly.
    for entry in fs::read_dir(&videos).map_err(|e| Error::io(&videos, e))? {
        let path = entry.map_err(|e| Error::io(&videos, e))?.path();
        if path.extension().is_some_and(|x| x == "tsgf") {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    let (manifest, blobs) = ds.serialize();
    for (s, blob) in ds.samples.iter().zip(blobs) {
        let path = videos.join(format!("{}.tsgf", s.id));
        fs::write(&path, blob).map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

pub fn load_distilled(dir: &Path) -> Result<DistilledDataset> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Version { found: m.format_version, expected: FORMAT_VERSION });
    }
    if m.classes != m.class_names.len() {
        return Err(Error::format(&path, format!("classes {} but {} class names", m.classes, m.class_names.len())));
    }
    let mut samples = Vec::with_capacity(m.samples.len());
    for e in m.samples {
        let file: PathBuf = dir.join(&e.file);
        let buf = fs::read(&file).map_err(|err| Error::io(&file, err))?;
        let digest = hex_digest(&buf);
        if digest != e.sha256 {
            return Err(Error::Integrity {
                path: file,
                detail: format!("sha256 {digest} does not match manifest {}", e.sha256),
            });
        }
        let (shape, data) = io::decode(&buf, &file)?;
        if shape != m.shape.dims() {
            return Err(Error::format(&file, format!("tensor shape {shape:?} != manifest shape {:?}", m.shape.dims())));
        }
        samples.push(DistilledSample {
            id: e.id,
            class: e.class,
            video: Video::new(m.shape.dims(), data)?,
            soft_label: e.soft_label,
            source_id: e.source_id,
            profile: e.profile,
        });
    }
    let ds = DistilledDataset {
        shape: m.shape,
        class_names: m.class_names,
        ipc: m.ipc,
        samples,
        recalibrated: m.recalibrated,
        teacher_hash: m.teacher_hash,
        config: m.config,
    };
    ds.validate().map_err(|e| Error::format(&path, e.to_string()))?;
    Ok(ds)
}

/// Loads a distilled set and compares its recorded teacher hash with the
/// checkpoint at `teacher`. A mismatch is returned (and logged) as a
/// warning, not an error.
pub fn load_distilled_checked(dir: &Path, teacher: &Path) -> Result<(DistilledDataset, Option<String>)> {
    let ds = load_distilled(dir)?;
    let actual = file_hash(teacher)?;
    let warning = match &ds.teacher_hash {
        Some(h) if *h == actual => None,
        Some(h) => Some(format!("distilled set was produced by teacher {h}, but {} hashes to {actual}", teacher.display())),
        None => Some("distilled set does not record a teacher hash".to_string()),
    };
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok((ds, warning))
}
