//! Procedural toy videos in which class identity lives in the motion.
//!
//! Every object moves on a torus (positions wrap at the frame border) from a
//! uniformly random start, so for classes that share a shape and differ only
//! in direction, every single frame has the same distribution: only the
//! ordering of frames tells them apart.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Label, Splits, VideoSample};
use crate::error::{Error, Result};
use crate::seed;
use crate::video::{Video, VideoShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Square,
    Cross,
    Ring,
    HBar,
    VBar,
}

impl ShapeKind {
    /// Whether pixel `(dy, dx)` of a `size x size` stamp is foreground.
    fn covers(&self, size: usize, dy: usize, dx: usize) -> bool {
        let mid = size / 2;
        let half = size / 6;
        let band = |v: usize| v.abs_diff(mid) <= half;
        match self {
            ShapeKind::Square => true,
            ShapeKind::Cross => band(dy) || band(dx),
            ShapeKind::Ring => dy == 0 || dx == 0 || dy + 1 == size || dx + 1 == size,
            ShapeKind::HBar => band(dy),
            ShapeKind::VBar => band(dx),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Motion {
    Static,
    /// Each step moves by `(dx, dy)` pixels with probability `move_prob`,
    /// otherwise pauses; pauses make motion bursty so saliency varies.
    Linear { dx: i32, dy: i32, move_prob: f64 },
    /// Sinusoidal displacement along x (`horizontal`) or y.
    Oscillate { horizontal: bool, amplitude: f64, period: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub shape: ShapeKind,
    pub size: usize,
    pub motion: Motion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToySpec {
    pub classes: Vec<ClassSpec>,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise: f64,
    pub background: f64,
    pub foreground: f64,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec::standard(16, 32, 32)
    }
}

impl ToySpec {
    /// Eight classes: a square moving right / left / down / up (identical
    /// appearance, motion-only differences) and four static shapes.
    pub fn standard(frames: usize, height: usize, width: usize) -> ToySpec {
        let side = height.min(width);
        let size = ((side / 4) | 1).max(3);
        let speed = (side / 16).max(1) as i32;
        let moving = |name: &str, dx: i32, dy: i32| ClassSpec {
            name: name.into(),
            shape: ShapeKind::Square,
            size,
            motion: Motion::Linear { dx: dx * speed, dy: dy * speed, move_prob: 0.7 },
        };
        let still = |name: &str, shape| ClassSpec { name: name.into(), shape, size, motion: Motion::Static };
        ToySpec {
            classes: vec![
                moving("square_right", 1, 0),
                moving("square_left", -1, 0),
                moving("square_down", 0, 1),
                moving("square_up", 0, -1),
                still("cross", ShapeKind::Cross),
                still("ring", ShapeKind::Ring),
                still("hbar", ShapeKind::HBar),
                still("vbar", ShapeKind::VBar),
            ],
            frames,
            height,
            width,
            noise: 0.05,
            background: 0.1,
            foreground: 0.9,
            train_per_class: 100,
            val_per_class: 20,
            test_per_class: 20,
            seed: 0,
        }
    }

    /// Desk-scale variant: 8 frames of 16x16 and fewer samples.
    pub fn compact() -> ToySpec {
        ToySpec { train_per_class: 60, val_per_class: 10, test_per_class: 20, ..ToySpec::standard(8, 16, 16) }
    }

    pub fn shape(&self) -> VideoShape {
        VideoShape { frames: self.frames, channels: 1, height: self.height, width: self.width }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config("toy dataset needs at least two classes".into()));
        }
        if self.frames == 0 || self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::Config("toy dataset needs at least one frame and one train and test sample per class".into()));
        }
        for c in &self.classes {
            if c.size == 0 || c.size > self.height.min(self.width) {
                return Err(Error::Config(format!(
                    "resolution {}x{} too small for {} of size {}",
                    self.height, self.width, c.name, c.size
                )));
            }
            if let Motion::Linear { move_prob, .. } = c.motion {
                if !(0.0..=1.0).contains(&move_prob) {
                    return Err(Error::Config(format!("{}: move probability {move_prob} outside [0, 1]", c.name)));
                }
            }
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Config(format!("noise level {} must be non-negative", self.noise)));
        }
        Ok(())
    }

    /// Mean inter-frame difference is what separates these pairs; returns the
    /// class pairs that share shape and size and differ only in motion.
    pub fn motion_only_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for (i, a) in self.classes.iter().enumerate() {
            for (j, b) in self.classes.iter().enumerate().skip(i + 1) {
                if a.shape == b.shape && a.size == b.size && a.motion != b.motion {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }
}

fn render<R: Rng>(spec: &ToySpec, class: &ClassSpec, rng: &mut R) -> Video {
    let (t, h, w) = (spec.frames, spec.height, spec.width);
    let mut data = vec![spec.background; t * h * w];
    let (mut y, mut x) = (rng.random_range(0..h) as i64, rng.random_range(0..w) as i64);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    for f in 0..t {
        let (oy, ox) = match class.motion {
            Motion::Static => (0, 0),
            Motion::Linear { dx, dy, move_prob } => {
                if f > 0 && rng.random_bool(move_prob) {
                    y += dy as i64;
                    x += dx as i64;
                }
                (0, 0)
            }
            Motion::Oscillate { horizontal, amplitude, period } => {
                let off = (amplitude * (std::f64::consts::TAU * f as f64 / period + phase).sin()).round() as i64;
                if horizontal {
                    (0, off)
                } else {
                    (off, 0)
                }
            }
        };
        let frame = &mut data[f * h * w..(f + 1) * h * w];
        for dy in 0..class.size {
            for dx in 0..class.size {
                if class.shape.covers(class.size, dy, dx) {
                    let py = (y + oy + dy as i64).rem_euclid(h as i64) as usize;
                    let px = (x + ox + dx as i64).rem_euclid(w as i64) as usize;
                    frame[py * w + px] = spec.foreground;
                }
            }
        }
    }
    if spec.noise > 0.0 {
        let normal = Normal::new(0.0, spec.noise).expect("valid noise");
        data.iter_mut().for_each(|v| *v = (*v + normal.sample(rng)).clamp(0.0, 1.0));
    }
    Video::new([t, 1, h, w], data).expect("consistent toy video")
}

/// Deterministic train/val/test splits. Each sample draws from its own
/// stream derived from `(seed, split, class, index)`.
pub fn generate_toy_dataset(spec: &ToySpec) -> Result<Splits> {
    spec.validate()?;
    let split = |name: &str, per_class: usize| -> Vec<VideoSample> {
        let base = seed::derive(spec.seed, name);
        let mut out = Vec::with_capacity(per_class * spec.classes.len());
        for (c, class) in spec.classes.iter().enumerate() {
            let class_base = seed::derive_index(base, c as u64);
            for i in 0..per_class {
                let mut rng = seed::rng(seed::derive_index(class_base, i as u64));
                out.push(VideoSample {
                    id: format!("{name}-{}-{i:04}", class.name),
                    video: render(spec, class, &mut rng),
                    label: Label::Hard(c),
                });
            }
        }
        out
    };
    Ok(Splits {
        shape: spec.shape(),
        class_names: spec.classes.iter().map(|c| c.name.clone()).collect(),
        train: split("train", spec.train_per_class),
        val: split("val", spec.val_per_class),
        test: split("test", spec.test_per_class),
    })
}
