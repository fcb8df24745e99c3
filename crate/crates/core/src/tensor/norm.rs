//! Per-channel statistics and normalization for `[B, C, ...]` activations.
//! Composing these three ops yields batch normalization whose batch mean and
//! variance are themselves differentiable graph values.

use super::{OpKind, Tensor};
use crate::error::{Error, Result};

/// (batch, channels, elements per channel per sample)
fn layout(op: &'static str, x: &Tensor) -> Result<(usize, usize, usize)> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(Error::shape(op, format!("expected [B, C, ...], got {s:?}")));
    }
    let inner = s[2..].iter().product();
    if s[0] * inner == 0 {
        return Err(Error::shape(op, format!("no elements per channel in {s:?}")));
    }
    Ok((s[0], s[1], inner))
}

fn for_channel(x: &[f64], b: usize, c: usize, inner: usize, mut f: impl FnMut(usize, &[f64])) {
    for ch in 0..c {
        for bi in 0..b {
            let start = (bi * c + ch) * inner;
            f(ch, &x[start..start + inner]);
        }
    }
}

impl Tensor {
    /// Mean of each channel over batch and all trailing axes: `[C]`.
    pub fn channel_mean(&self) -> Result<Tensor> {
        let (b, c, inner) = layout("channel_mean", self)?;
        let mut m = vec![0.0; c];
        for_channel(self.data(), b, c, inner, |ch, xs| m[ch] += xs.iter().sum::<f64>());
        let n = (b * inner) as f64;
        m.iter_mut().for_each(|v| *v /= n);
        Ok(Tensor::from_op(vec![c], m, OpKind::ChannelMean, vec![self.clone()]))
    }

    /// Biased (population) variance of each channel: `[C]`.
    pub fn channel_var(&self) -> Result<Tensor> {
        let (b, c, inner) = layout("channel_var", self)?;
        let mean = self.detach().channel_mean()?;
        let mut v = vec![0.0; c];
        for_channel(self.data(), b, c, inner, |ch, xs| {
            let m = mean.data()[ch];
            v[ch] += xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
        });
        let n = (b * inner) as f64;
        v.iter_mut().for_each(|x| *x /= n);
        Ok(Tensor::from_op(vec![c], v, OpKind::ChannelVar, vec![self.clone()]))
    }

    /// `gamma * (x - mean) / sqrt(var + eps) + beta`, every argument but `x`
    /// being a per-channel `[C]` vector.
    pub fn channel_norm(&self, mean: &Tensor, var: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        let (b, c, inner) = layout("channel_norm", self)?;
        for (name, t) in [("mean", mean), ("var", var), ("gamma", gamma), ("beta", beta)] {
            if t.shape() != [c] {
                return Err(Error::shape("channel_norm", format!("{name} {:?} does not match {c} channels of {:?}", t.shape(), self.shape())));
            }
        }
        let x = self.data();
        let mut y = vec![0.0; x.len()];
        for bi in 0..b {
            for ch in 0..c {
                let scale = gamma.data()[ch] / (var.data()[ch] + eps).sqrt();
                let (m, shift) = (mean.data()[ch], beta.data()[ch]);
                let start = (bi * c + ch) * inner;
                for i in start..start + inner {
                    y[i] = (x[i] - m) * scale + shift;
                }
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            y,
            OpKind::ChannelNorm { eps },
            vec![self.clone(), mean.clone(), var.clone(), gamma.clone(), beta.clone()],
        ))
    }
}

pub(super) fn backward(kind: &OpKind, inputs: &[Tensor], out: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
    let x = &inputs[0];
    let (b, c, inner) = layout("norm backward", x).expect("validated in forward");
    let n = (b * inner) as f64;
    match kind {
        OpKind::ChannelMean => {
            let mut dx = vec![0.0; x.len()];
            for bi in 0..b {
                for ch in 0..c {
                    let start = (bi * c + ch) * inner;
                    dx[start..start + inner].iter_mut().for_each(|v| *v = g[ch] / n);
                }
            }
            vec![Some(dx)]
        }
        OpKind::ChannelVar => {
            let mean = x.detach().channel_mean().expect("validated in forward");
            let mut dx = vec![0.0; x.len()];
            for bi in 0..b {
                for ch in 0..c {
                    let (m, gc) = (mean.data()[ch], g[ch]);
                    let start = (bi * c + ch) * inner;
                    for i in start..start + inner {
                        dx[i] = gc * 2.0 * (x.data()[i] - m) / n;
                    }
                }
            }
            debug_assert_eq!(out.len(), c);
            vec![Some(dx)]
        }
        OpKind::ChannelNorm { eps } => {
            let (mean, var, gamma) = (inputs[1].data(), inputs[2].data(), inputs[3].data());
            let xs = x.data();
            let mut dx = vec![0.0; x.len()];
            let (mut dmean, mut dvar, mut dgamma, mut dbeta) = (vec![0.0; c], vec![0.0; c], vec![0.0; c], vec![0.0; c]);
            for bi in 0..b {
                for ch in 0..c {
                    let inv_std = 1.0 / (var[ch] + eps).sqrt();
                    let start = (bi * c + ch) * inner;
                    for i in start..start + inner {
                        let centered = xs[i] - mean[ch];
                        dx[i] = g[i] * gamma[ch] * inv_std;
                        dmean[ch] -= g[i] * gamma[ch] * inv_std;
                        dvar[ch] -= 0.5 * g[i] * gamma[ch] * centered * inv_std.powi(3);
                        dgamma[ch] += g[i] * centered * inv_std;
                        dbeta[ch] += g[i];
                    }
                }
            }
            vec![Some(dx), Some(dmean), Some(dvar), Some(dgamma), Some(dbeta)]
        }
        _ => unreachable!("not a normalization op"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_channel_has_zero_variance() {
        let mut data = vec![3.0; 8];
        data[4..].copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        // [B=1, C=2, 4]
        let x = Tensor::new(vec![1, 2, 4], data).unwrap();
        assert_eq!(x.channel_mean().unwrap().data(), &[3.0, 2.5]);
        assert_eq!(x.channel_var().unwrap().data(), &[0.0, 1.25]);
    }

    #[test]
    fn normalized_output_has_unit_statistics() {
        let x = Tensor::new(vec![2, 1, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let (m, v) = (x.channel_mean().unwrap(), x.channel_var().unwrap());
        let one = Tensor::full(vec![1], 1.0);
        let zero = Tensor::zeros(vec![1]);
        let y = x.channel_norm(&m, &v, &one, &zero, 0.0).unwrap();
        assert!(y.channel_mean().unwrap().item().abs() < 1e-12);
        assert!((y.channel_var().unwrap().item() - 1.0).abs() < 1e-12);
    }
}
