use crate::error::{Error, Result};
use crate::kernels::bce_with_logit;
use crate::mask::MultiLabelMask;
use crate::tensor::Tensor;

fn mean_bce(logits: &Tensor, target: &Tensor, field: &str) -> Result<f64> {
    if logits.shape() != target.shape() {
        return Err(Error::shape(format!(
            "{field} {:?} and target {:?} differ in shape",
            logits.shape(),
            target.shape()
        )));
    }
    if logits.is_empty() {
        return Err(Error::shape(format!("{field} is empty")));
    }
    let sum: f64 = logits.data().iter().zip(target.data()).map(|(&x, &t)| bce_with_logit(x, t)).sum();
    Ok(sum / logits.len() as f64)
}

/// Mean per-pixel, per-class binary cross-entropy, plus `aux_weight` times
/// the same on the auxiliary logits. `target` entries must be 0 or 1.
pub fn bce_multilabel_loss(
    logits: &Tensor,
    target: &Tensor,
    aux_logits: Option<&Tensor>,
    aux_weight: f64,
) -> Result<f64> {
    if let Some(i) = target.data().iter().position(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::validation(
            "target",
            format!("entry {i} is {}, expected 0 or 1", target.data()[i]),
        ));
    }
    let mut loss = mean_bce(logits, target, "logits")?;
    if let Some(aux) = aux_logits {
        loss += aux_weight * mean_bce(aux, target, "aux_logits")?;
    }
    Ok(loss)
}

pub fn mask_loss(logits: &Tensor, target: &MultiLabelMask, aux_logits: Option<&Tensor>, aux_weight: f64) -> Result<f64> {
    bce_multilabel_loss(logits, &target.to_tensor(), aux_logits, aux_weight)
}
