use serde::{Deserialize, Serialize};

use super::{Builder, Ctx, InputSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Light-weight C3D-style network: `widths.len()` stages of
/// conv3d -> batch-norm -> ReLU -> average pool, then a global average pool
/// and one linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiniC3DConfig {
    #[serde(flatten)]
    pub input: InputSpec,
    /// Output channels of each conv stage.
    pub widths: Vec<usize>,
    /// Cubic kernel extent; padding keeps the extent unchanged.
    pub kernel: usize,
    /// Pooling window `[t, h, w]` after each stage (`[1, 1, 1]` = none).
    pub pools: Vec<[usize; 3]>,
}

impl MiniC3DConfig {
    /// Widths 16/32/64 with spatial pooling after every stage and temporal
    /// pooling after the second, shrunk where the input is too small.
    pub fn standard(input: InputSpec) -> Self {
        Self::with_widths(input, vec![16, 32, 64])
    }

    pub fn with_widths(input: InputSpec, widths: Vec<usize>) -> Self {
        let mut extent = [input.frames, input.height, input.width];
        let mut pools = Vec::with_capacity(widths.len());
        for stage in 0..widths.len() {
            let wanted = [if stage == 1 { 2 } else { 1 }, 2, 2];
            let pool: [usize; 3] = std::array::from_fn(|d| if extent[d] >= wanted[d] { wanted[d] } else { 1 });
            for d in 0..3 {
                extent[d] /= pool[d];
            }
            pools.push(pool);
        }
        MiniC3DConfig { input, widths, kernel: 3, pools }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("minic3d: {msg}")));
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad(format!("invalid widths {:?}", self.widths));
        }
        if self.pools.len() != self.widths.len() {
            return bad(format!("{} pools for {} stages", self.pools.len(), self.widths.len()));
        }
        if self.kernel.is_multiple_of(2) {
            return bad(format!("kernel {} must be odd", self.kernel));
        }
        let i = self.input;
        if i.frames * i.channels * i.height * i.width == 0 || i.classes < 2 {
            return bad(format!("degenerate input {i:?}"));
        }
        let mut extent = [i.frames, i.height, i.width];
        for pool in &self.pools {
            for d in 0..3 {
                if pool[d] == 0 || extent[d] < pool[d] {
                    return bad(format!("pooling schedule {:?} does not fit input {i:?}", self.pools));
                }
                extent[d] /= pool[d];
            }
        }
        Ok(())
    }

    pub(super) fn build(&self, b: &mut Builder) -> Result<()> {
        self.validate()?;
        let k = self.kernel;
        let mut cin = self.input.channels;
        for (s, &w) in self.widths.iter().enumerate() {
            b.kaiming(&format!("stage{s}.conv.weight"), vec![w, cin, k, k, k], cin * k * k * k);
            b.batch_norm(&format!("stage{s}.bn"), w);
            cin = w;
        }
        b.linear("fc", cin, self.input.classes);
        Ok(())
    }

    pub(super) fn forward(&self, ctx: &mut Ctx<'_>, x: &Tensor) -> Result<Tensor> {
        let pad = self.kernel / 2;
        let mut h = x.permute(&[0, 2, 1, 3, 4])?;
        for (s, pool) in self.pools.iter().enumerate() {
            h = h.conv3d(ctx.p(&format!("stage{s}.conv.weight")), None, [1, 1, 1], [pad; 3])?;
            h = ctx.batch_norm(&format!("stage{s}.bn"), &h)?.relu();
            if *pool != [1, 1, 1] {
                h = h.avg_pool3d(*pool)?;
            }
        }
        let (batch, channels) = (h.shape()[0], h.shape()[1]);
        let rest = h.len() / (batch * channels).max(1);
        let pooled = h.reshape(vec![batch, channels, rest])?.mean_axis(2)?;
        ctx.linear("fc", &pooled)
    }
}
