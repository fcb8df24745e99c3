//! Saliency-gated cut-and-paste mixing between two videos.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::Video;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartnerRule {
    /// Another synthetic video of a different class.
    DifferentClass,
    /// Any other synthetic video.
    AnyOther,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub partner: PartnerRule,
    /// Range of the box side as a fraction of the frame side.
    pub box_ratio: (f64, f64),
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec { partner: PartnerRule::DifferentClass, box_ratio: (0.3, 0.6), seed: 0 }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.box_ratio;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!("box ratio range {:?} must satisfy 0 < lo <= hi <= 1", self.box_ratio)));
        }
        Ok(())
    }
}

/// Spatial rectangle, identical for every frame it is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixBox {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl MixBox {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.top..self.top + self.height).contains(&y) && (self.left..self.left + self.width).contains(&x)
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

/// Box with side ratio drawn from `spec.box_ratio`, placed uniformly so it
/// lies fully inside an `height x width` frame.
pub fn sample_box<R: Rng>(spec: &AugmentSpec, height: usize, width: usize, rng: &mut R) -> MixBox {
    let (lo, hi) = spec.box_ratio;
    let ratio = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let bh = ((ratio * height as f64).round() as usize).clamp(1, height);
    let bw = ((ratio * width as f64).round() as usize).clamp(1, width);
    MixBox {
        top: rng.random_range(0..=height - bh),
        left: rng.random_range(0..=width - bw),
        height: bh,
        width: bw,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub video: Video,
    pub region: MixBox,
    /// Frames that received partner pixels.
    pub gated: Vec<bool>,
}

impl Augmented {
    /// Fraction of the video's pixels that now come from the partner.
    pub fn mixed_fraction(&self) -> f64 {
        let [t, _, h, w] = self.video.shape();
        let frames = self.gated.iter().filter(|&&g| g).count();
        (frames * self.region.area()) as f64 / (t * h * w).max(1) as f64
    }
}

fn paste(dst: &mut [f64], src: &[f64], channels: usize, height: usize, width: usize, region: &MixBox) {
    for c in 0..channels {
        for y in region.top..region.top + region.height {
            let row = (c * height + y) * width;
            let span = row + region.left..row + region.left + region.width;
            dst[span.clone()].copy_from_slice(&src[span]);
        }
    }
}

/// Replaces the pixels inside `region` with the partner's on every frame
/// whose saliency is at most `epsilon`; key frames (`s > epsilon`) are
/// returned untouched.
pub fn gated_augment_at(video: &Video, saliency: &[f64], epsilon: f64, partner: &Video, region: MixBox) -> Result<Augmented> {
    let [t, c, h, w] = video.shape();
    if partner.shape() != video.shape() {
        return Err(Error::shape("gated_augment", format!("video {:?} vs partner {:?}", video.shape(), partner.shape())));
    }
    if saliency.len() != t {
        return Err(Error::shape("gated_augment", format!("{} saliency values for {t} frames", saliency.len())));
    }
    if region.height == 0 || region.width == 0 || region.top + region.height > h || region.left + region.width > w {
        return Err(Error::shape("gated_augment", format!("box {region:?} outside {h}x{w} frame")));
    }
    let mut out = video.clone();
    let gated: Vec<bool> = saliency.iter().map(|&s| s <= epsilon).collect();
    for (i, &g) in gated.iter().enumerate() {
        if g {
            paste(out.frame_mut(i), partner.frame(i), c, h, w, &region);
        }
    }
    Ok(Augmented { video: out, region, gated })
}

/// [`gated_augment_at`] with a box drawn from `spec`.
pub fn gated_augment<R: Rng>(
    video: &Video,
    saliency: &[f64],
    epsilon: f64,
    partner: &Video,
    spec: &AugmentSpec,
    rng: &mut R,
) -> Result<Augmented> {
    spec.validate()?;
    let [_, _, h, w] = video.shape();
    let region = sample_box(spec, h, w, rng);
    gated_augment_at(video, saliency, epsilon, partner, region)
}

/// Image-style mixing: every frame gets its own independently drawn box,
/// regardless of saliency. Returns the video and its mixed pixel fraction.
pub fn frame_independent_mix<R: Rng>(video: &Video, partner: &Video, spec: &AugmentSpec, rng: &mut R) -> Result<(Video, f64)> {
    spec.validate()?;
    if partner.shape() != video.shape() {
        return Err(Error::shape("frame_independent_mix", format!("video {:?} vs partner {:?}", video.shape(), partner.shape())));
    }
    let [t, c, h, w] = video.shape();
    let mut out = video.clone();
    let mut mixed = 0usize;
    for i in 0..t {
        let region = sample_box(spec, h, w, rng);
        paste(out.frame_mut(i), partner.frame(i), c, h, w, &region);
        mixed += region.area();
    }
    Ok((out, mixed as f64 / (t * h * w).max(1) as f64))
}
