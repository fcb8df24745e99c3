use crate::error::{Error, Result};
use crate::models::{BnState, LayerStats, Mode, Model};
use crate::tensor::Tensor;
use crate::train::{soft_cross_entropy, targets_tensor};

/// `sum_l ||mu_l - RM_l||_2 + ||var_l - RV_l||_2` over BN layers.
pub fn regularization_loss(stats: &[LayerStats], bn: &[BnState]) -> Result<Tensor> {
    if stats.len() != bn.len() {
        return Err(Error::shape("regularization_loss", format!("{} captured layers vs {} BN layers", stats.len(), bn.len())));
    }
    let mut total: Option<Tensor> = None;
    for (s, state) in stats.iter().zip(bn) {
        let c = state.channels();
        if s.mean.shape() != [c] || s.var.shape() != [c] {
            return Err(Error::shape(
                "regularization_loss",
                format!("layer {}: stats {:?} vs {c} channels", state.name, s.mean.shape()),
            ));
        }
        let rm = Tensor::new(vec![c], state.running_mean.clone())?;
        let rv = Tensor::new(vec![c], state.running_var.clone())?;
        let term = s.mean.sub(&rm)?.l2_norm().add(&s.var.sub(&rv)?.l2_norm())?;
        total = Some(match total {
            Some(t) => t.add(&term)?,
            None => term,
        });
    }
    Ok(total.unwrap_or_else(|| Tensor::scalar(0.0)))
}

/// Loss on one synthetic batch with its component values.
pub struct LossTerms {
    pub total: Tensor,
    pub ce: f64,
    pub reg: f64,
}

/// `ce_weight * CE(teacher(x), onehot(y)) + r_bn * L_reg`, with the teacher
/// in capture mode so BN layers use and report the batch statistics of `x`.
pub fn distill_loss(x: &Tensor, labels: &[usize], teacher: &Model, r_bn: f64, ce_weight: f64) -> Result<LossTerms> {
    let classes = teacher.input().classes;
    if x.shape().first() != Some(&labels.len()) {
        return Err(Error::shape("distill_loss", format!("batch {:?} vs {} labels", x.shape(), labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= classes) {
        return Err(Error::shape("distill_loss", format!("label {bad} >= {classes} classes")));
    }
    let bound = teacher.bind(false);
    let fwd = teacher.forward(&bound, x, Mode::Capture)?;
    let onehot: Vec<Vec<f64>> = labels.iter().map(|&c| (0..classes).map(|k| f64::from(k == c)).collect()).collect();
    let ce = soft_cross_entropy(&fwd.logits, &targets_tensor(&onehot)?)?;
    let reg = regularization_loss(&fwd.stats, teacher.bn_layers())?;
    let (ce_v, reg_v) = (ce.item(), reg.item());
    let total = ce.mul_scalar(ce_weight).add(&reg.mul_scalar(r_bn))?;
    Ok(LossTerms { total, ce: ce_v, reg: reg_v })
}
