use super::{conv, gemm, norm, numel, OpKind, Tensor};
use crate::error::{Error, Result};

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn check_axis(op: &'static str, t: &Tensor, axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= t.rank() {
        return Err(Error::shape(op, format!("axis {axis} out of range for {:?}", t.shape())));
    }
    let outer = numel(&t.shape()[..axis]);
    let inner = numel(&t.shape()[axis + 1..]);
    Ok((outer, t.shape()[axis], inner))
}

/// Row geometry for ops that act along the last axis.
fn rows(t: &Tensor) -> (usize, usize) {
    let width = t.shape().last().copied().unwrap_or(1);
    (t.len() / width.max(1), width)
}

fn map(t: &Tensor, kind: OpKind, f: impl Fn(f64) -> f64) -> Tensor {
    let data = t.data().iter().map(|&x| f(x)).collect();
    Tensor::from_op(t.shape().to_vec(), data, kind, vec![t.clone()])
}

fn permute_data(data: &[f64], shape: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let rank = shape.len();
    let mut in_strides = vec![1usize; rank];
    for d in (0..rank.saturating_sub(1)).rev() {
        in_strides[d] = in_strides[d + 1] * shape[d + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut index = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..data.len() {
        out.push(data[offset]);
        for d in (0..rank).rev() {
            index[d] += 1;
            offset += strides[d];
            if index[d] < out_shape[d] {
                break;
            }
            offset -= strides[d] * out_shape[d];
            index[d] = 0;
        }
    }
    (out_shape, out)
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a + b).collect();
        Ok(Tensor::from_op(self.shape().to_vec(), data, OpKind::Add, vec![self.clone(), other.clone()]))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a - b).collect();
        Ok(Tensor::from_op(self.shape().to_vec(), data, OpKind::Sub, vec![self.clone(), other.clone()]))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a * b).collect();
        Ok(Tensor::from_op(self.shape().to_vec(), data, OpKind::Mul, vec![self.clone(), other.clone()]))
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        map(self, OpKind::AddScalar, |x| x + c)
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        map(self, OpKind::MulScalar(c), |x| x * c)
    }

    pub fn neg(&self) -> Tensor {
        self.mul_scalar(-1.0)
    }

    pub fn square(&self) -> Tensor {
        self.mul(self).expect("square: identical shapes")
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        match (self.shape(), other.shape()) {
            (&[m, k], &[k2, n]) if k == k2 => {
                let mut out = vec![0.0; m * n];
                gemm(m, k, n, 1.0, self.data(), false, other.data(), false, 0.0, &mut out);
                Ok(Tensor::from_op(vec![m, n], out, OpKind::MatMul, vec![self.clone(), other.clone()]))
            }
            (a, b) => Err(Error::shape("matmul", format!("{a:?} x {b:?}"))),
        }
    }

    /// Affine map `x W^T + b` for `x: [n, in]`, `W: [out, in]`, `b: [out]`.
    pub fn linear(&self, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
        let (n, inp) = match self.shape() {
            &[n, i] => (n, i),
            s => return Err(Error::shape("linear", format!("input must be rank 2, got {s:?}"))),
        };
        let out = match weight.shape() {
            &[o, i] if i == inp => o,
            s => return Err(Error::shape("linear", format!("weight {s:?} incompatible with input {:?}", self.shape()))),
        };
        if bias.shape() != [out] {
            return Err(Error::shape("linear", format!("bias {:?}, expected [{out}]", bias.shape())));
        }
        let mut y = Vec::with_capacity(n * out);
        for _ in 0..n {
            y.extend_from_slice(bias.data());
        }
        gemm(n, inp, out, 1.0, self.data(), false, weight.data(), true, 1.0, &mut y);
        Ok(Tensor::from_op(
            vec![n, out],
            y,
            OpKind::Linear,
            vec![self.clone(), weight.clone(), bias.clone()],
        ))
    }

    pub fn relu(&self) -> Tensor {
        map(self, OpKind::Relu, |x| x.max(0.0))
    }

    pub fn sigmoid(&self) -> Tensor {
        map(self, OpKind::Sigmoid, |x| 1.0 / (1.0 + (-x).exp()))
    }

    pub fn tanh(&self) -> Tensor {
        map(self, OpKind::Tanh, f64::tanh)
    }

    pub fn exp(&self) -> Tensor {
        map(self, OpKind::Exp, f64::exp)
    }

    pub fn ln(&self) -> Tensor {
        map(self, OpKind::Log, f64::ln)
    }

    pub fn abs(&self) -> Tensor {
        map(self, OpKind::Abs, f64::abs)
    }

    pub fn sum(&self) -> Tensor {
        let s = self.data().iter().sum();
        Tensor::from_op(Vec::new(), vec![s], OpKind::Sum, vec![self.clone()])
    }

    pub fn mean(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let m = s / self.len().max(1) as f64;
        Tensor::from_op(Vec::new(), vec![m], OpKind::Mean, vec![self.clone()])
    }

    /// Euclidean norm of all elements.
    pub fn l2_norm(&self) -> Tensor {
        let n = self.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        Tensor::from_op(Vec::new(), vec![n], OpKind::L2Norm, vec![self.clone()])
    }

    /// Mean over one axis, which is removed from the shape.
    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        let (outer, dim, inner) = check_axis("mean_axis", self, axis)?;
        if dim == 0 {
            return Err(Error::shape("mean_axis", format!("empty axis {axis} in {:?}", self.shape())));
        }
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for d in 0..dim {
                let src = &self.data()[(o * dim + d) * inner..][..inner];
                out[o * inner..][..inner].iter_mut().zip(src).for_each(|(a, b)| *a += b);
            }
        }
        out.iter_mut().for_each(|v| *v /= dim as f64);
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        Ok(Tensor::from_op(shape, out, OpKind::MeanAxis { axis }, vec![self.clone()]))
    }

    /// Softmax along the last axis.
    pub fn softmax(&self) -> Tensor {
        let (n, w) = rows(self);
        let mut out = self.to_vec();
        for r in 0..n {
            let row = &mut out[r * w..][..w];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|v| *v = (*v - m).exp());
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        Tensor::from_op(self.shape().to_vec(), out, OpKind::Softmax, vec![self.clone()])
    }

    /// Numerically stable log-softmax along the last axis.
    pub fn log_softmax(&self) -> Tensor {
        let (n, w) = rows(self);
        let mut out = self.to_vec();
        for r in 0..n {
            let row = &mut out[r * w..][..w];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        Tensor::from_op(self.shape().to_vec(), out, OpKind::LogSoftmax, vec![self.clone()])
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Tensor> {
        let shape = shape.into();
        if numel(&shape) != self.len() {
            return Err(Error::shape("reshape", format!("{:?} -> {:?}", self.shape(), shape)));
        }
        Ok(Tensor::from_op(shape, self.to_vec(), OpKind::Reshape, vec![self.clone()]))
    }

    /// Collapses every axis after the first: `[B, ...] -> [B, rest]`.
    pub fn flatten(&self) -> Result<Tensor> {
        match self.shape().first() {
            Some(&b) => {
                let rest = self.len().checked_div(b).unwrap_or(0);
                self.reshape(vec![b, rest])
            }
            None => Err(Error::shape("flatten", "scalar input")),
        }
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.rank()).collect::<Vec<_>>() {
            return Err(Error::shape("permute", format!("{perm:?} is not a permutation of {:?}", self.shape())));
        }
        let (shape, data) = permute_data(self.data(), self.shape(), perm);
        Ok(Tensor::from_op(shape, data, OpKind::Permute { perm: perm.to_vec() }, vec![self.clone()]))
    }

    /// Slice at `index` along `axis`; the axis is removed.
    pub fn select(&self, axis: usize, index: usize) -> Result<Tensor> {
        let (outer, dim, inner) = check_axis("select", self, axis)?;
        if index >= dim {
            return Err(Error::shape("select", format!("index {index} out of range for axis {axis} of {:?}", self.shape())));
        }
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            out.extend_from_slice(&self.data()[(o * dim + index) * inner..][..inner]);
        }
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        Ok(Tensor::from_op(shape, out, OpKind::Select { axis, index }, vec![self.clone()]))
    }
}

/// Gradients of the op's inputs given the upstream gradient `g` of `out`.
pub(super) fn backward(kind: &OpKind, inputs: &[Tensor], out: &Tensor, g: &[f64]) -> Vec<Option<Vec<f64>>> {
    let need = |i: usize| inputs[i].requires_grad();
    let ew = |f: &dyn Fn(usize) -> f64| -> Vec<Option<Vec<f64>>> { vec![Some((0..g.len()).map(f).collect())] };
    match kind {
        OpKind::Add => vec![Some(g.to_vec()), Some(g.to_vec())],
        OpKind::Sub => vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())],
        OpKind::Mul => {
            let (a, b) = (inputs[0].data(), inputs[1].data());
            vec![
                need(0).then(|| g.iter().zip(b).map(|(g, b)| g * b).collect()),
                need(1).then(|| g.iter().zip(a).map(|(g, a)| g * a).collect()),
            ]
        }
        OpKind::AddScalar => vec![Some(g.to_vec())],
        OpKind::MulScalar(c) => vec![Some(g.iter().map(|v| v * c).collect())],
        OpKind::MatMul => {
            let (a, b) = (&inputs[0], &inputs[1]);
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let da = need(0).then(|| {
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, 1.0, g, false, b.data(), true, 0.0, &mut da);
                da
            });
            let db = need(1).then(|| {
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, 1.0, a.data(), true, g, false, 0.0, &mut db);
                db
            });
            vec![da, db]
        }
        OpKind::Linear => {
            let (x, w) = (&inputs[0], &inputs[1]);
            let (n, inp, outc) = (x.shape()[0], x.shape()[1], w.shape()[0]);
            let dx = need(0).then(|| {
                let mut dx = vec![0.0; n * inp];
                gemm(n, outc, inp, 1.0, g, false, w.data(), false, 0.0, &mut dx);
                dx
            });
            let dw = need(1).then(|| {
                let mut dw = vec![0.0; outc * inp];
                gemm(outc, n, inp, 1.0, g, true, x.data(), false, 0.0, &mut dw);
                dw
            });
            let db = need(2).then(|| {
                let mut db = vec![0.0; outc];
                for row in g.chunks(outc) {
                    db.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                db
            });
            vec![dx, dw, db]
        }
        OpKind::Conv3d { stride, padding } => conv::conv3d_backward(inputs, out, g, *stride, *padding),
        OpKind::AvgPool3d { kernel } => vec![Some(conv::avg_pool3d_backward(&inputs[0], out, g, *kernel))],
        OpKind::Relu => {
            let x = inputs[0].data();
            ew(&|i| if x[i] > 0.0 { g[i] } else { 0.0 })
        }
        OpKind::Sigmoid => {
            let y = out.data();
            ew(&|i| g[i] * y[i] * (1.0 - y[i]))
        }
        OpKind::Tanh => {
            let y = out.data();
            ew(&|i| g[i] * (1.0 - y[i] * y[i]))
        }
        OpKind::Exp => {
            let y = out.data();
            ew(&|i| g[i] * y[i])
        }
        OpKind::Log => {
            let x = inputs[0].data();
            ew(&|i| g[i] / x[i])
        }
        OpKind::Abs => {
            let x = inputs[0].data();
            ew(&|i| if x[i] > 0.0 { g[i] } else if x[i] < 0.0 { -g[i] } else { 0.0 })
        }
        OpKind::Sum => vec![Some(vec![g[0]; inputs[0].len()])],
        OpKind::Mean => {
            let n = inputs[0].len().max(1) as f64;
            vec![Some(vec![g[0] / n; inputs[0].len()])]
        }
        OpKind::L2Norm => {
            let norm = out.item();
            let x = inputs[0].data();
            if norm == 0.0 {
                vec![Some(vec![0.0; x.len()])]
            } else {
                vec![Some(x.iter().map(|v| g[0] * v / norm).collect())]
            }
        }
        OpKind::MeanAxis { axis } => {
            let x = &inputs[0];
            let outer = numel(&x.shape()[..*axis]);
            let dim = x.shape()[*axis];
            let inner = numel(&x.shape()[axis + 1..]);
            let mut dx = vec![0.0; x.len()];
            for o in 0..outer {
                let src = &g[o * inner..][..inner];
                for d in 0..dim {
                    dx[(o * dim + d) * inner..][..inner]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(a, b)| *a = b / dim as f64);
                }
            }
            vec![Some(dx)]
        }
        OpKind::Softmax => {
            let (n, w) = rows(out);
            let y = out.data();
            let mut dx = vec![0.0; y.len()];
            for r in 0..n {
                let (yr, gr) = (&y[r * w..][..w], &g[r * w..][..w]);
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for j in 0..w {
                    dx[r * w + j] = yr[j] * (gr[j] - dot);
                }
            }
            vec![Some(dx)]
        }
        OpKind::LogSoftmax => {
            let (n, w) = rows(out);
            let y = out.data();
            let mut dx = vec![0.0; y.len()];
            for r in 0..n {
                let (yr, gr) = (&y[r * w..][..w], &g[r * w..][..w]);
                let total: f64 = gr.iter().sum();
                for j in 0..w {
                    dx[r * w + j] = gr[j] - yr[j].exp() * total;
                }
            }
            vec![Some(dx)]
        }
        OpKind::Reshape => vec![Some(g.to_vec())],
        OpKind::Permute { perm } => {
            let mut inverse = vec![0; perm.len()];
            for (i, &p) in perm.iter().enumerate() {
                inverse[p] = i;
            }
            vec![Some(permute_data(g, out.shape(), &inverse).1)]
        }
        OpKind::Select { axis, index } => {
            let x = &inputs[0];
            let outer = numel(&x.shape()[..*axis]);
            let dim = x.shape()[*axis];
            let inner = numel(&x.shape()[axis + 1..]);
            let mut dx = vec![0.0; x.len()];
            for o in 0..outer {
                dx[(o * dim + index) * inner..][..inner].copy_from_slice(&g[o * inner..][..inner]);
            }
            vec![Some(dx)]
        }
        OpKind::ChannelMean | OpKind::ChannelVar | OpKind::ChannelNorm { .. } => norm::backward(kind, inputs, out, g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_clips_negatives() {
        assert_eq!(t(&[3], &[-1.0, 0.0, 2.0]).relu().data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        assert_eq!(t(&[2], &[0.0, 0.0]).softmax().data(), &[0.5, 0.5]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let x = Tensor::param(vec![2], vec![1.0, 2.0]).unwrap();
        x.square().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn mean_gradient_is_uniform() {
        let x = Tensor::param(vec![4], vec![3.0, -1.0, 0.5, 8.0]).unwrap();
        x.mean().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let x = Tensor::param(vec![2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(x.relu().backward(), Err(Error::NonScalarRoot(_))));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let err = t(&[2], &[1.0, 2.0]).add(&t(&[3], &[1.0, 2.0, 3.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("add") && msg.contains("[2]") && msg.contains("[3]"), "{msg}");
        assert!(t(&[2, 3], &[0.0; 6]).matmul(&t(&[2, 3], &[0.0; 6])).is_err());
    }

    #[test]
    fn permute_then_inverse_is_identity() {
        let data: Vec<f64> = (0..24).map(f64::from).collect();
        let x = t(&[2, 3, 4], &data);
        let p = x.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        // element [i,j,k] of x lands at [k,i,j]
        assert_eq!(p.data()[(3 * 2 + 1) * 3 + 2], x.data()[(3 + 2) * 4 + 3]);
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn select_and_mean_axis() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(x.select(1, 2).unwrap().data(), &[3.0, 6.0]);
        assert_eq!(x.mean_axis(0).unwrap().data(), &[2.5, 3.5, 4.5]);
        assert_eq!(x.mean_axis(1).unwrap().data(), &[2.0, 5.0]);
    }

    #[test]
    fn gradients_accumulate_across_passes() {
        let x = Tensor::param(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        x.square().sum().backward().unwrap();
        x.abs().sum().backward().unwrap();
        let separate = x.grad().unwrap();

        let y = Tensor::param(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        y.square().sum().add(&y.abs().sum()).unwrap().backward().unwrap();
        assert_eq!(separate, y.grad().unwrap());
    }
}
