//! 3-D convolution via im2col + GEMM, and non-overlapping average pooling.
//! Layout is `[batch, channels, time, height, width]` throughout.

use super::{gemm, OpKind, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Geometry {
    cin: usize,
    input: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    padding: [usize; 3],
    output: [usize; 3],
}

impl Geometry {
    fn rows(&self) -> usize {
        self.cin * self.kernel.iter().product::<usize>()
    }

    fn cols(&self) -> usize {
        self.output.iter().product()
    }

    fn input_len(&self) -> usize {
        self.cin * self.input.iter().product::<usize>()
    }

    /// Visits every (column-matrix index, input index) pair that lies inside
    /// the unpadded input.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let [t, h, w] = self.input;
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding;
        let [ot, oh, ow] = self.output;
        let p = self.cols();
        for ci in 0..self.cin {
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let row = ((ci * kt + dt) * kh + dh) * kw + dw;
                        for zt in 0..ot {
                            let it = (zt * st + dt) as isize - pt as isize;
                            if it < 0 || it >= t as isize {
                                continue;
                            }
                            for zh in 0..oh {
                                let ih = (zh * sh + dh) as isize - ph as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                let in_base = ((ci * t + it as usize) * h + ih as usize) * w;
                                let col_base = row * p + (zt * oh + zh) * ow;
                                for zw in 0..ow {
                                    let iw = (zw * sw + dw) as isize - pw as isize;
                                    if iw >= 0 && iw < w as isize {
                                        f(col_base + zw, in_base + iw as usize);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        cols.iter_mut().for_each(|v| *v = 0.0);
        self.for_each_tap(|c, i| cols[c] = x[i]);
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        self.for_each_tap(|c, i| dx[i] += cols[c]);
    }
}

fn geometry(x: &Tensor, w: &Tensor, stride: [usize; 3], padding: [usize; 3]) -> Result<(usize, usize, Geometry)> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 5 || ws.len() != 5 {
        return Err(Error::shape("conv3d", format!("expected rank-5 input and weight, got {xs:?} and {ws:?}")));
    }
    if xs[1] != ws[1] {
        return Err(Error::shape("conv3d", format!("input channels {} (input {xs:?}) != weight channels {} (weight {ws:?})", xs[1], ws[1])));
    }
    if stride.contains(&0) {
        return Err(Error::shape("conv3d", "zero stride"));
    }
    let mut output = [0; 3];
    for d in 0..3 {
        let padded = xs[d + 2] + 2 * padding[d];
        if padded < ws[d + 2] {
            return Err(Error::shape("conv3d", format!("kernel {ws:?} larger than padded input {xs:?}")));
        }
        output[d] = (padded - ws[d + 2]) / stride[d] + 1;
    }
    let geo = Geometry {
        cin: xs[1],
        input: [xs[2], xs[3], xs[4]],
        kernel: [ws[2], ws[3], ws[4]],
        stride,
        padding,
        output,
    };
    Ok((xs[0], ws[0], geo))
}

impl Tensor {
    /// 3-D convolution with zero padding. `self: [B, Cin, T, H, W]`,
    /// `weight: [Cout, Cin, kt, kh, kw]`, optional `bias: [Cout]`.
    pub fn conv3d(&self, weight: &Tensor, bias: Option<&Tensor>, stride: [usize; 3], padding: [usize; 3]) -> Result<Tensor> {
        let (batch, cout, geo) = geometry(self, weight, stride, padding)?;
        if let Some(b) = bias {
            if b.shape() != [cout] {
                return Err(Error::shape("conv3d", format!("bias {:?}, expected [{cout}]", b.shape())));
            }
        }
        let (k, p) = (geo.rows(), geo.cols());
        let mut cols = vec![0.0; k * p];
        let mut out = vec![0.0; batch * cout * p];
        for b in 0..batch {
            geo.im2col(&self.data()[b * geo.input_len()..][..geo.input_len()], &mut cols);
            let y = &mut out[b * cout * p..][..cout * p];
            if let Some(bias) = bias {
                for (c, chunk) in y.chunks_mut(p).enumerate() {
                    chunk.iter_mut().for_each(|v| *v = bias.data()[c]);
                }
            }
            gemm(cout, k, p, 1.0, weight.data(), false, &cols, false, 1.0, y);
        }
        let mut inputs = vec![self.clone(), weight.clone()];
        inputs.extend(bias.cloned());
        let [ot, oh, ow] = geo.output;
        Ok(Tensor::from_op(vec![batch, cout, ot, oh, ow], out, OpKind::Conv3d { stride, padding }, inputs))
    }

    /// Average pooling with stride equal to the kernel; trailing elements
    /// that do not fill a window are dropped.
    pub fn avg_pool3d(&self, kernel: [usize; 3]) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 5 {
            return Err(Error::shape("avg_pool3d", format!("expected rank-5 input, got {s:?}")));
        }
        if kernel.contains(&0) || (0..3).any(|d| s[d + 2] < kernel[d]) {
            return Err(Error::shape("avg_pool3d", format!("kernel {kernel:?} does not fit input {s:?}")));
        }
        let (t, h, w) = (s[2], s[3], s[4]);
        let (ot, oh, ow) = (t / kernel[0], h / kernel[1], w / kernel[2]);
        let planes = s[0] * s[1];
        let scale = 1.0 / kernel.iter().product::<usize>() as f64;
        let x = self.data();
        let mut out = vec![0.0; planes * ot * oh * ow];
        for pl in 0..planes {
            for zt in 0..ot {
                for zh in 0..oh {
                    for zw in 0..ow {
                        let mut acc = 0.0;
                        for dt in 0..kernel[0] {
                            for dh in 0..kernel[1] {
                                let base = ((pl * t + zt * kernel[0] + dt) * h + zh * kernel[1] + dh) * w + zw * kernel[2];
                                acc += x[base..base + kernel[2]].iter().sum::<f64>();
                            }
                        }
                        out[((pl * ot + zt) * oh + zh) * ow + zw] = acc * scale;
                    }
                }
            }
        }
        Ok(Tensor::from_op(vec![s[0], s[1], ot, oh, ow], out, OpKind::AvgPool3d { kernel }, vec![self.clone()]))
    }
}

pub(super) fn conv3d_backward(inputs: &[Tensor], out: &Tensor, g: &[f64], stride: [usize; 3], padding: [usize; 3]) -> Vec<Option<Vec<f64>>> {
    let (x, w) = (&inputs[0], &inputs[1]);
    let (batch, cout, geo) = geometry(x, w, stride, padding).expect("validated in forward");
    let (k, p) = (geo.rows(), geo.cols());
    debug_assert_eq!(out.len(), batch * cout * p);
    let mut dx = x.requires_grad().then(|| vec![0.0; x.len()]);
    let mut dw = w.requires_grad().then(|| vec![0.0; w.len()]);
    let mut cols = vec![0.0; k * p];
    let mut dcols = vec![0.0; k * p];
    for b in 0..batch {
        let gb = &g[b * cout * p..][..cout * p];
        if let Some(dw) = dw.as_mut() {
            geo.im2col(&x.data()[b * geo.input_len()..][..geo.input_len()], &mut cols);
            gemm(cout, p, k, 1.0, gb, false, &cols, true, 1.0, dw);
        }
        if let Some(dx) = dx.as_mut() {
            gemm(k, cout, p, 1.0, w.data(), true, gb, false, 0.0, &mut dcols);
            geo.col2im(&dcols, &mut dx[b * geo.input_len()..][..geo.input_len()]);
        }
    }
    let mut grads = vec![dx, dw];
    if let Some(bias) = inputs.get(2) {
        grads.push(bias.requires_grad().then(|| {
            let mut db = vec![0.0; cout];
            for chunk in g.chunks(p).enumerate() {
                db[chunk.0 % cout] += chunk.1.iter().sum::<f64>();
            }
            db
        }));
    }
    grads
}

pub(super) fn avg_pool3d_backward(x: &Tensor, out: &Tensor, g: &[f64], kernel: [usize; 3]) -> Vec<f64> {
    let s = x.shape();
    let (t, h, w) = (s[2], s[3], s[4]);
    let os = out.shape();
    let (ot, oh, ow) = (os[2], os[3], os[4]);
    let scale = 1.0 / kernel.iter().product::<usize>() as f64;
    let mut dx = vec![0.0; x.len()];
    for pl in 0..s[0] * s[1] {
        for zt in 0..ot {
            for zh in 0..oh {
                for zw in 0..ow {
                    let gv = g[((pl * ot + zt) * oh + zh) * ow + zw] * scale;
                    for dt in 0..kernel[0] {
                        for dh in 0..kernel[1] {
                            let base = ((pl * t + zt * kernel[0] + dt) * h + zh * kernel[1] + dh) * w + zw * kernel[2];
                            dx[base..base + kernel[2]].iter_mut().for_each(|v| *v += gv);
                        }
                    }
                }
            }
        }
    }
    dx
}
