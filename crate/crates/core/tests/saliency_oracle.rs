//! The saliency filter against brute-force reimplementations, plus the
//! invariants of the mask and of gated augmentation.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsgf::saliency::{
    apply_mask, build_mask, frame_differences, gated_augment, gated_augment_at, mask_with_epsilon, smooth_saliency,
    AugmentSpec, EpsilonRule, MixBox, WindowKind, WindowSpec,
};
use tsgf::{Tensor, Video};

/// Per-pixel loop straight from the definition.
fn brute_differences(v: &[Vec<Vec<f64>>]) -> Vec<f64> {
    let t = v.len();
    let mut d = vec![0.0; t];
    if t == 1 {
        return d;
    }
    for i in 0..t {
        let pixels = v[i].iter().map(Vec::len).sum::<usize>();
        let mut acc = 0.0;
        for c in 0..v[i].len() {
            for p in 0..v[i][c].len() {
                let x = v[i][c][p];
                acc += if i == 0 {
                    (v[1][c][p] - x).abs()
                } else if i == t - 1 {
                    (x - v[i - 1][c][p]).abs()
                } else {
                    ((v[i + 1][c][p] - x).abs() + (x - v[i - 1][c][p]).abs()) / 2.0
                };
            }
        }
        d[i] = acc / pixels as f64;
    }
    d
}

/// Arithmetic mean of the available entries among `d[i-k..=i]`.
fn moving_average(d: &[f64], k: usize) -> Vec<f64> {
    (0..d.len())
        .map(|i| {
            let lo = i.saturating_sub(k);
            d[lo..=i].iter().sum::<f64>() / (i - lo + 1) as f64
        })
        .collect()
}

fn brute_mask(s: &[f64], eps: f64) -> Vec<f64> {
    let max = s.iter().cloned().fold(f64::MIN, f64::max);
    let min = s.iter().cloned().fold(f64::MAX, f64::min);
    if max == min {
        return vec![1.0; s.len()];
    }
    s.iter().map(|&x| (if eps - x > 0.0 { eps - x } else { 0.0 } / (max - min)).clamp(0.0, 1.0)).collect()
}

fn nested(v: &Video) -> Vec<Vec<Vec<f64>>> {
    let [t, c, h, w] = v.shape();
    (0..t).map(|i| (0..c).map(|ch| v.frame(i)[ch * h * w..(ch + 1) * h * w].to_vec()).collect()).collect()
}

fn video_strategy() -> impl Strategy<Value = Video> {
    (1usize..=8, 1usize..=2, 1usize..=4, 1usize..=4).prop_flat_map(|(t, c, h, w)| {
        prop::collection::vec(0.0f64..=1.0, t * c * h * w).prop_map(move |data| Video::new([t, c, h, w], data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn differences_match_brute_force_exactly(v in video_strategy()) {
        prop_assert_eq!(frame_differences(&v), brute_differences(&nested(&v)));
    }

    #[test]
    fn uniform_smoothing_is_a_moving_average(d in prop::collection::vec(0.0f64..2.0, 1..=8), k in 0usize..=5) {
        let s = smooth_saliency(&d, &WindowSpec::uniform(k));
        for (a, b) in s.iter().zip(moving_average(&d, k)) {
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn mask_matches_brute_force(s in prop::collection::vec(0.0f64..2.0, 1..=8), q in 0.0f64..=1.0) {
        let (m, eps) = build_mask(&s, &EpsilonRule::Quantile(q));
        for (a, b) in m.iter().zip(brute_mask(&s, eps)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn mask_invariants(s in prop::collection::vec(0.0f64..2.0, 2..=8), q in 0.0f64..=1.0) {
        let (m, eps) = build_mask(&s, &EpsilonRule::Quantile(q));
        let degenerate = s.iter().all(|&x| x == s[0]);
        for i in 0..s.len() {
            prop_assert!((0.0..=1.0).contains(&m[i]));
            if !degenerate {
                prop_assert_eq!(m[i] == 0.0, s[i] >= eps);
            }
            for j in 0..s.len() {
                if s[i] < s[j] {
                    prop_assert!(m[i] >= m[j]);
                }
            }
        }
    }

    #[test]
    fn windows_are_normalized(k in 0usize..=6, triangular in any::<bool>()) {
        let kind = if triangular { WindowKind::Triangular } else { WindowKind::Uniform };
        let w = WindowSpec { k, kind }.weights();
        prop_assert_eq!(w.len(), k + 1);
        prop_assert!(w.iter().all(|&a| a >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_d_is_a_fixed_point(c in 0.0f64..3.0, t in 1usize..=8, k in 0usize..=4, triangular in any::<bool>()) {
        let kind = if triangular { WindowKind::Triangular } else { WindowKind::Uniform };
        for v in smooth_saliency(&vec![c; t], &WindowSpec { k, kind }) {
            prop_assert!((v - c).abs() <= 1e-12);
        }
    }
}

#[test]
fn worked_examples() {
    let v = Video::new([4, 1, 1, 1], vec![0.0, 1.0, 3.0, 3.0]).unwrap();
    let d = frame_differences(&v);
    assert_eq!(d, vec![1.0, 1.5, 1.0, 0.0]);
    assert_eq!(smooth_saliency(&d, &WindowSpec::uniform(1)), vec![1.0, 1.25, 1.25, 0.5]);
    assert_eq!(smooth_saliency(&d, &WindowSpec::uniform(0)), d);
}

#[test]
fn epsilon_at_minimum_gives_zero_mask() {
    let s = [0.3, 0.1, 0.7, 0.4];
    assert_eq!(mask_with_epsilon(&s, 0.1), vec![0.0; 4]);
    assert_eq!(build_mask(&[0.0; 5], &EpsilonRule::default()).0, vec![1.0; 5]);
}

#[test]
fn apply_mask_examples() {
    let g = Tensor::new(vec![2, 1, 2, 1], vec![2.0, 2.0, -3.0, 5.0]).unwrap();
    assert_eq!(apply_mask(&g, &[1.0, 1.0]).unwrap().data(), g.data());
    assert_eq!(apply_mask(&g, &[0.5, 0.0]).unwrap().data(), &[1.0, 1.0, 0.0, 0.0]);
    assert!(apply_mask(&g, &[1.0]).is_err());
}

#[test]
fn gate_example_two_frames() {
    let video = Video::filled([2, 1, 4, 4], 0.2);
    let partner = Video::filled([2, 1, 4, 4], 0.9);
    let region = MixBox { top: 1, left: 1, height: 2, width: 2 };
    let out = gated_augment_at(&video, &[0.1, 0.9], 0.5, &partner, region).unwrap();
    assert_eq!(out.video.frame(1), video.frame(1));
    let changed = out.video.frame(0).iter().filter(|&&p| p == 0.9).count();
    assert_eq!(changed, 4);
    let none = gated_augment_at(&video, &[0.1, 0.9], 0.05, &partner, region).unwrap();
    assert_eq!(none.video, video);
}

#[test]
fn full_box_on_all_frames_is_the_partner() {
    let mut r = common::rng(3);
    let video = Video::new([3, 2, 4, 5], common::uniform(&mut r, 120, 0.0, 1.0)).unwrap();
    let partner = Video::new([3, 2, 4, 5], common::uniform(&mut r, 120, 0.0, 1.0)).unwrap();
    let spec = AugmentSpec { box_ratio: (1.0, 1.0), ..Default::default() };
    let out = gated_augment(&video, &[0.2; 3], 0.2, &partner, &spec, &mut r).unwrap();
    assert_eq!(out.video, partner);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// Frames with s > eps are bit-identical; every other change lies inside
    /// one box shared by all gated frames.
    #[test]
    fn augmentation_contract(
        v in video_strategy(),
        seed in any::<u64>(),
        eps in 0.0f64..1.0,
        lo in 0.05f64..1.0,
    ) {
        let [t, c, h, w] = v.shape();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let partner = Video::new([t, c, h, w], common::uniform(&mut r, t * c * h * w, 0.0, 1.0)).unwrap();
        let s: Vec<f64> = common::uniform(&mut r, t, 0.0, 1.0);
        let spec = AugmentSpec { box_ratio: (lo, 1.0), seed, ..Default::default() };
        let out = gated_augment(&v, &s, eps, &partner, &spec, &mut r).unwrap();
        let b = out.region;
        prop_assert!(b.height >= 1 && b.width >= 1 && b.top + b.height <= h && b.left + b.width <= w);
        for i in 0..t {
            let (orig, aug, part) = (v.frame(i), out.video.frame(i), partner.frame(i));
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let k = (ch * h + y) * w + x;
                        if s[i] > eps || !b.contains(y, x) {
                            prop_assert_eq!(aug[k].to_bits(), orig[k].to_bits());
                        } else {
                            prop_assert_eq!(aug[k].to_bits(), part[k].to_bits());
                        }
                    }
                }
            }
        }
    }
}
