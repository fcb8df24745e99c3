use serde::{Deserialize, Serialize};

use super::{Builder, Ctx, InputSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Frame-wise 2-D students: per-frame conv stages (kernel `1 x 3 x 3`),
/// spatial global pooling, then either a temporal mean or a GRU over frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AltConfig {
    #[serde(flatten)]
    pub input: InputSpec,
    pub widths: Vec<usize>,
    /// GRU hidden size (ignored by the temporal-pool variant).
    pub hidden: usize,
}

impl AltConfig {
    pub fn standard(input: InputSpec) -> Self {
        AltConfig { input, widths: vec![16, 32], hidden: 32 }
    }

    fn validate(&self) -> Result<()> {
        let i = self.input;
        if self.widths.is_empty() || self.widths.contains(&0) || self.hidden == 0 {
            return Err(Error::Config(format!("alt architecture: invalid widths {:?} / hidden {}", self.widths, self.hidden)));
        }
        if i.channels * i.height * i.width == 0 || i.classes < 2 {
            return Err(Error::Config(format!("alt architecture: degenerate input {i:?}")));
        }
        Ok(())
    }

    pub(super) fn build(&self, b: &mut Builder, recurrent: bool) -> Result<()> {
        self.validate()?;
        let mut cin = self.input.channels;
        for (s, &w) in self.widths.iter().enumerate() {
            b.kaiming(&format!("stage{s}.conv.weight"), vec![w, cin, 1, 3, 3], cin * 9);
            b.batch_norm(&format!("stage{s}.bn"), w);
            cin = w;
        }
        if recurrent {
            let h = self.hidden;
            for gate in ["z", "r", "n"] {
                b.linear(&format!("gru.input_{gate}"), cin, h);
                b.linear(&format!("gru.hidden_{gate}"), h, h);
            }
            cin = h;
        }
        b.linear("fc", cin, self.input.classes);
        Ok(())
    }

    pub(super) fn forward(&self, ctx: &mut Ctx<'_>, x: &Tensor, recurrent: bool) -> Result<Tensor> {
        let mut h = x.permute(&[0, 2, 1, 3, 4])?;
        for s in 0..self.widths.len() {
            h = h.conv3d(ctx.p(&format!("stage{s}.conv.weight")), None, [1, 1, 1], [0, 1, 1])?;
            h = ctx.batch_norm(&format!("stage{s}.bn"), &h)?.relu();
            if h.shape()[3] >= 2 && h.shape()[4] >= 2 {
                h = h.avg_pool3d([1, 2, 2])?;
            }
        }
        let &[batch, channels, frames, height, width] = h.shape() else {
            unreachable!("rank-5 activations")
        };
        // [B, C, T]: per-frame features
        let frame_features = h.reshape(vec![batch, channels, frames, height * width])?.mean_axis(3)?;
        let summary = if recurrent {
            let mut state = Tensor::zeros(vec![batch, self.hidden]);
            for t in 0..frames {
                let input = frame_features.select(2, t)?;
                state = gru_step(ctx, &input, &state)?;
            }
            state
        } else {
            frame_features.mean_axis(2)?
        };
        ctx.linear("fc", &summary)
    }
}

fn gru_step(ctx: &Ctx<'_>, x: &Tensor, h: &Tensor) -> Result<Tensor> {
    let gate = |g: &str| -> Result<(Tensor, Tensor)> {
        Ok((ctx.linear(&format!("gru.input_{g}"), x)?, ctx.linear(&format!("gru.hidden_{g}"), h)?))
    };
    let (xz, hz) = gate("z")?;
    let (xr, hr) = gate("r")?;
    let (xn, hn) = gate("n")?;
    let z = xz.add(&hz)?.sigmoid();
    let r = xr.add(&hr)?.sigmoid();
    let n = xn.add(&r.mul(&hn)?)?.tanh();
    // (1 - z) * n + z * h
    n.add(&z.mul(&h.sub(&n)?)?)
}
