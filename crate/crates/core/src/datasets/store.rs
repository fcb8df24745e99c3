//! Real-data splits on disk: `manifest.json` plus one stacked tensor
//! `[N, T, C, H, W]` per split.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Label, Splits, VideoSample};
use crate::error::{Error, Result};
use crate::tensor::io;
use crate::video::{Video, VideoShape};

pub const SPLITS_MANIFEST: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;
const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    shape: VideoShape,
    class_names: Vec<String>,
    splits: Vec<SplitEntry>,
}

#[derive(Serialize, Deserialize)]
struct SplitEntry {
    name: String,
    file: String,
    ids: Vec<String>,
    labels: Vec<Label>,
}

fn parts(s: &Splits) -> [&[VideoSample]; 3] {
    [&s.train, &s.val, &s.test]
}

pub fn save_splits(splits: &Splits, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for (name, set) in SPLITS.iter().zip(parts(splits)) {
        let file = format!("{name}.tsgf");
        let mut data = Vec::with_capacity(set.len() * splits.shape.len());
        for s in set {
            if s.video.geometry() != splits.shape {
                return Err(Error::Data(format!("{}: shape {:?} differs from dataset shape", s.id, s.video.shape())));
            }
            data.extend_from_slice(s.video.data());
        }
        let mut shape = vec![set.len()];
        shape.extend(splits.shape.dims());
        let path = dir.join(&file);
        fs::write(&path, io::encode(&shape, &data)).map_err(|e| Error::io(&path, e))?;
        entries.push(SplitEntry {
            name: name.to_string(),
            file,
            ids: set.iter().map(|s| s.id.clone()).collect(),
            labels: set.iter().map(|s| s.label.clone()).collect(),
        });
    }
    let m = Manifest {
        format_version: FORMAT_VERSION,
        shape: splits.shape,
        class_names: splits.class_names.clone(),
        splits: entries,
    };
    let path = dir.join(SPLITS_MANIFEST);
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load_splits(dir: &Path) -> Result<Splits> {
    let path = dir.join(SPLITS_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Version { found: m.format_version, expected: FORMAT_VERSION });
    }
    let mut out: [Vec<VideoSample>; 3] = Default::default();
    for (slot, name) in out.iter_mut().zip(SPLITS) {
        let entry = m
            .splits
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::format(&path, format!("missing split {name:?}")))?;
        if entry.ids.len() != entry.labels.len() {
            return Err(Error::format(&path, format!("split {name}: {} ids but {} labels", entry.ids.len(), entry.labels.len())));
        }
        let file = dir.join(&entry.file);
        let buf = fs::read(&file).map_err(|e| Error::io(&file, e))?;
        let (shape, data) = io::decode(&buf, &file)?;
        let mut expected = vec![entry.ids.len()];
        expected.extend(m.shape.dims());
        if shape != expected {
            return Err(Error::format(&file, format!("tensor shape {shape:?} != manifest {expected:?}")));
        }
        let n = m.shape.len();
        for (i, (id, label)) in entry.ids.iter().zip(&entry.labels).enumerate() {
            let sample = VideoSample {
                id: id.clone(),
                video: Video::new(m.shape.dims(), data[i * n..(i + 1) * n].to_vec())?,
                label: label.clone(),
            };
            sample.check(m.class_names.len()).map_err(|e| Error::format(&file, e.to_string()))?;
            slot.push(sample);
        }
    }
    let [train, val, test] = out;
    Ok(Splits { shape: m.shape, class_names: m.class_names, train, val, test })
}
