//! Ingestion of pre-extracted frames.
//!
//! ```text
//! root/
//!   labels.csv          "id,class" per line (an "id,class" header is allowed)
//!   <id>/0001.png ...   numbered frames, ordered by the number in the name
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Label, VideoSample};
use crate::error::{Error, Result};
use crate::video::Video;

pub const LABELS_FILE: &str = "labels.csv";
const EXTENSIONS: [&str; 5] = ["png", "pgm", "ppm", "pnm", "pbm"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLayout {
    /// Frames per emitted video.
    pub frames: usize,
    /// 1 for grayscale, 3 for RGB.
    pub channels: usize,
}

/// Uniform-stride selection of `frames` indices out of `available`:
/// index `i` maps to `floor(i * available / frames)`.
pub fn resample_indices(available: usize, frames: usize) -> Vec<usize> {
    (0..frames).map(|i| i * available / frames).collect()
}

fn parse_labels(path: &Path) -> Result<Vec<(String, usize)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.eq_ignore_ascii_case("id,class")) {
            continue;
        }
        let bad = || Error::format(path, format!("line {}: expected \"id,class\", got {line:?}", n + 1));
        let (id, class) = line.split_once(',').ok_or_else(bad)?;
        let class = class.trim().parse().map_err(|_| bad())?;
        out.push((id.trim().to_string(), class));
    }
    Ok(out)
}

fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem.chars().rev().take_while(|c| c.is_ascii_digit()).collect();
    digits.chars().rev().collect::<String>().parse().ok()
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if ext.is_some_and(|e| EXTENSIONS.contains(&e.as_str())) {
            let n = frame_number(&path).ok_or_else(|| Error::format(&path, "frame file name has no trailing number"))?;
            files.push((n, path));
        }
    }
    files.sort();
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

fn read_frame(path: &Path, channels: usize) -> Result<(u32, u32, Vec<f64>)> {
    let img = image::open(path).map_err(|e| Error::Image { path: path.to_path_buf(), source: e })?;
    let (w, h) = (img.width(), img.height());
    let plane = (w * h) as usize;
    let mut out = vec![0.0; channels * plane];
    if channels == 1 {
        for (o, p) in out.iter_mut().zip(img.to_luma32f().pixels()) {
            *o = p.0[0] as f64;
        }
    } else {
        for (i, p) in img.to_rgb32f().pixels().enumerate() {
            for c in 0..3 {
                out[c * plane + i] = p.0[c] as f64;
            }
        }
    }
    Ok((w, h, out))
}

/// Reads every video listed in `labels.csv` under `root`, resampled to
/// `layout.frames` frames with pixels scaled to [0, 1].
pub fn ingest_frame_directory(root: &Path, layout: FrameLayout) -> Result<Vec<VideoSample>> {
    if layout.frames == 0 || !matches!(layout.channels, 1 | 3) {
        return Err(Error::Config(format!("unsupported frame layout {layout:?}")));
    }
    let labels_path = root.join(LABELS_FILE);
    if !labels_path.is_file() {
        return Err(Error::Data(format!("missing labels file {}", labels_path.display())));
    }
    let mut resolution: Option<(u32, u32)> = None;
    let mut out = Vec::new();
    for (id, class) in parse_labels(&labels_path)? {
        let dir = root.join(&id);
        let files = frame_files(&dir)?;
        if files.is_empty() {
            return Err(Error::Data(format!("{}: no frames", dir.display())));
        }
        let mut data = Vec::new();
        for idx in resample_indices(files.len(), layout.frames) {
            let (w, h, pixels) = read_frame(&files[idx], layout.channels)?;
            match resolution {
                None => resolution = Some((w, h)),
                Some(r) if r != (w, h) => {
                    return Err(Error::Data(format!(
                        "{}: resolution {w}x{h} differs from {}x{}",
                        files[idx].display(),
                        r.0,
                        r.1
                    )))
                }
                Some(_) => {}
            }
            data.extend(pixels);
        }
        let (w, h) = resolution.expect("at least one frame read");
        let mut video = Video::new([layout.frames, layout.channels, h as usize, w as usize], data)?;
        video.clamp_unit();
        out.push(VideoSample { id, video, label: Label::Hard(class) });
    }
    Ok(out)
}
