#![allow(dead_code)]

pub mod ops;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsgf::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Values in ±[0.1, 1.0]; keeps kinks of relu/abs away from the probe points.
pub fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect()
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Worst relative error `|analytic - numeric| / max(1, |numeric|)` over every
/// element of every input, comparing backward() against central differences.
pub fn max_fd_error(inputs: &[(Vec<usize>, Vec<f64>)], f: &dyn Fn(&[Tensor]) -> Tensor) -> f64 {
    let params: Vec<Tensor> = inputs
        .iter()
        .map(|(s, d)| Tensor::param(s.clone(), d.clone()).unwrap())
        .collect();
    let out = f(&params);
    assert_eq!(out.len(), 1, "objective must be scalar");
    out.backward().unwrap();

    let eval = |vals: &[Vec<f64>]| -> f64 {
        let ts: Vec<Tensor> = inputs
            .iter()
            .zip(vals)
            .map(|((s, _), d)| Tensor::new(s.clone(), d.clone()).unwrap())
            .collect();
        f(&ts).item()
    };

    let mut worst = 0.0f64;
    let mut vals: Vec<Vec<f64>> = inputs.iter().map(|(_, d)| d.clone()).collect();
    for (i, p) in params.iter().enumerate() {
        let analytic = p.grad().unwrap_or_else(|| vec![0.0; p.len()]);
        for j in 0..p.len() {
            let orig = vals[i][j];
            vals[i][j] = orig + FD_STEP;
            let up = eval(&vals);
            vals[i][j] = orig - FD_STEP;
            let down = eval(&vals);
            vals[i][j] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max((analytic[j] - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    worst
}

/// Contracts a tensor to a scalar with fixed pseudo-random weights so every
/// output element influences the objective differently.
pub fn weighted_sum(t: &Tensor, seed: u64) -> Tensor {
    let mut r = rng(seed);
    let w = Tensor::new(t.shape().to_vec(), uniform(&mut r, t.len(), -1.0, 1.0)).unwrap();
    t.mul(&w).unwrap().sum()
}

/// Random inputs for `shapes`, reproducible from `seed`.
pub fn random_inputs(shapes: &[Vec<usize>], positive: bool, seed: u64) -> Vec<(Vec<usize>, Vec<f64>)> {
    let mut r = rng(seed);
    shapes
        .iter()
        .map(|s| {
            let n = s.iter().product();
            let data = if positive { uniform(&mut r, n, 0.2, 2.0) } else { away_from_zero(&mut r, n) };
            (s.clone(), data)
        })
        .collect()
}

/// Inputs must sit this far from any kink: a hundred finite-difference steps.
pub const KINK_MARGIN: f64 = 100.0 * FD_STEP;

/// Random inputs for `op`, redrawn until they are clear of its kinks.
pub fn op_inputs(op: &ops::OpCase, seed: u64) -> Vec<(Vec<usize>, Vec<f64>)> {
    (0..)
        .map(|attempt: u64| random_inputs(&op.shapes, op.positive, seed ^ (attempt << 40)))
        .find(|inputs| {
            op.kink_distance.is_none_or(|dist| {
                let ts: Vec<Tensor> = inputs.iter().map(|(s, d)| Tensor::new(s.clone(), d.clone()).unwrap()).collect();
                dist(&ts) > KINK_MARGIN
            })
        })
        .unwrap()
}
