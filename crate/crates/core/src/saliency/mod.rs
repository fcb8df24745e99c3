//! Temporal saliency-guided filter.
//!
//! Per-frame inter-frame differences `d` are smoothed over a causal window
//! into saliency `s`; frames whose saliency exceeds a threshold `eps` are key
//! frames. The optimization mask `M = clamp(max(eps - s, 0) / (max s - min s))`
//! shrinks gradient steps on salient frames to zero, and gated augmentation
//! only ever touches frames with `s <= eps`.

mod augment;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::video::Video;

pub use augment::{frame_independent_mix, gated_augment, gated_augment_at, sample_box, AugmentSpec, Augmented, MixBox, PartnerRule};

/// Mean absolute change of each frame against its neighbours.
///
/// Interior frames average the forward and backward differences; the first
/// and last frame use their single one-sided difference. A one-frame video
/// yields `[0]`.
pub fn frame_differences(video: &Video) -> Vec<f64> {
    let frames = video.frames();
    let pixels = video.frame_len() as f64;
    if frames < 2 {
        return vec![0.0; frames];
    }
    (0..frames)
        .map(|i| {
            let cur = video.frame(i);
            let total: f64 = if i == 0 {
                cur.iter().zip(video.frame(1)).map(|(a, b)| (b - a).abs()).sum()
            } else if i + 1 == frames {
                cur.iter().zip(video.frame(i - 1)).map(|(a, p)| (a - p).abs()).sum()
            } else {
                cur.iter()
                    .zip(video.frame(i + 1))
                    .zip(video.frame(i - 1))
                    .map(|((a, n), p)| ((n - a).abs() + (a - p).abs()) / 2.0)
                    .sum()
            };
            total / pixels
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Uniform,
    /// Linearly decaying weight on older frames.
    Triangular,
}

/// Causal smoothing window over the current and `k` previous frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub k: usize,
    pub kind: WindowKind,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { k: 2, kind: WindowKind::Uniform }
    }
}

impl WindowSpec {
    pub fn uniform(k: usize) -> Self {
        WindowSpec { k, kind: WindowKind::Uniform }
    }

    /// Weights `alpha_0..=alpha_k` (index = frames back), summing to 1.
    pub fn weights(&self) -> Vec<f64> {
        let raw: Vec<f64> = match self.kind {
            WindowKind::Uniform => vec![1.0; self.k + 1],
            WindowKind::Triangular => (0..=self.k).map(|j| (self.k + 1 - j) as f64).collect(),
        };
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// `s_i = sum_j alpha_j d_{i-j}`; near the start, weights of missing past
/// frames are dropped and the rest renormalized.
pub fn smooth_saliency(d: &[f64], window: &WindowSpec) -> Vec<f64> {
    let alpha = window.weights();
    (0..d.len())
        .map(|i| {
            let span = window.k.min(i);
            let norm: f64 = alpha[..=span].iter().sum();
            (0..=span).map(|j| alpha[j] * d[i - j]).sum::<f64>() / norm
        })
        .collect()
}

/// How the saliency threshold `eps` is chosen for one video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonRule {
    /// Linearly interpolated `q`-quantile of the video's own saliency.
    Quantile(f64),
    /// Fixed threshold, clamped into `[min s, max s]`.
    Absolute(f64),
}

impl Default for EpsilonRule {
    fn default() -> Self {
        EpsilonRule::Quantile(0.8)
    }
}

impl EpsilonRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EpsilonRule::Quantile(q) if !(0.0..=1.0).contains(&q) => {
                Err(Error::Config(format!("epsilon quantile {q} outside [0, 1]")))
            }
            EpsilonRule::Absolute(e) if !e.is_finite() => Err(Error::Config(format!("epsilon {e} is not finite"))),
            _ => Ok(()),
        }
    }

    pub fn resolve(&self, s: &[f64]) -> f64 {
        if s.is_empty() {
            return 0.0;
        }
        let (lo, hi) = min_max(s);
        match *self {
            EpsilonRule::Quantile(q) => quantile(s, q),
            EpsilonRule::Absolute(e) => e.clamp(lo, hi),
        }
    }
}

fn min_max(s: &[f64]) -> (f64, f64) {
    s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Linear-interpolation quantile (position `q * (n - 1)` in sorted order).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `M_i = max(eps - s_i, 0) / (max s - min s)`, clamped to `[0, 1]`; all ones
/// when `s` is constant.
pub fn mask_with_epsilon(s: &[f64], eps: f64) -> Vec<f64> {
    let (lo, hi) = min_max(s);
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![1.0; s.len()];
    }
    s.iter().map(|&v| ((eps - v).max(0.0) / range).clamp(0.0, 1.0)).collect()
}

/// Resolves `eps` by `rule` and builds the optimization mask.
pub fn build_mask(s: &[f64], rule: &EpsilonRule) -> (Vec<f64>, f64) {
    let eps = rule.resolve(s);
    (mask_with_epsilon(s, eps), eps)
}

/// Everything the filter derives from one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyProfile {
    pub differences: Vec<f64>,
    pub saliency: Vec<f64>,
    pub epsilon: f64,
    pub mask: Vec<f64>,
}

impl SaliencyProfile {
    pub fn compute(video: &Video, window: &WindowSpec, rule: &EpsilonRule) -> SaliencyProfile {
        let differences = frame_differences(video);
        let saliency = smooth_saliency(&differences, window);
        let (mask, epsilon) = build_mask(&saliency, rule);
        SaliencyProfile { differences, saliency, epsilon, mask }
    }

    /// Frames whose saliency exceeds the threshold.
    pub fn key_frames(&self) -> Vec<usize> {
        self.saliency.iter().enumerate().filter(|(_, &s)| s > self.epsilon).map(|(i, _)| i).collect()
    }

    /// `frame_index,d,s,M` rows followed by the resolved threshold.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame_index,d,s,M\n");
        for i in 0..self.saliency.len() {
            out.push_str(&format!("{i},{},{},{}\n", self.differences[i], self.saliency[i], self.mask[i]));
        }
        out.push_str(&format!("epsilon,{}\n", self.epsilon));
        out
    }
}

/// Scales frame `t` of a `[T, ...]` gradient by `mask[t]`.
pub fn apply_mask(grad: &Tensor, mask: &[f64]) -> Result<Tensor> {
    let frames = grad.shape().first().copied().unwrap_or(0);
    if frames != mask.len() {
        return Err(Error::shape("apply_mask", format!("gradient {:?} vs mask of length {}", grad.shape(), mask.len())));
    }
    let mut out = grad.to_vec();
    apply_mask_in_place(&mut out, mask);
    Tensor::new(grad.shape().to_vec(), out)
}

pub(crate) fn apply_mask_in_place(frames: &mut [f64], mask: &[f64]) {
    let per = frames.len() / mask.len().max(1);
    for (chunk, &m) in frames.chunks_mut(per).zip(mask) {
        chunk.iter_mut().for_each(|v| *v *= m);
    }
}
