use super::attention::softmax_in_place;
use super::tensor::{Real, Tensor2};
use crate::error::{Error, Result};

/// Loss value and gradient with respect to the scored tensor.
#[derive(Debug, Clone)]
pub struct LossGrad<T = f64> {
    pub loss: T,
    pub grad: Tensor2<T>,
}

/// Mean cross-entropy over the labelled rows of `logits`.
///
/// Rows whose label is `None` are excluded from both loss and gradient.
/// Errors if a label is out of range or every row is unlabelled.
pub fn cross_entropy<T: Real>(logits: &Tensor2<T>, labels: &[Option<usize>]) -> Result<LossGrad<T>> {
    let (rows, classes) = logits.shape();
    if labels.len() != rows {
        return Err(Error::dim(
            "cross_entropy",
            logits.shape_str(),
            format!("{} labels", labels.len()),
        ));
    }
    for (frame, l) in labels.iter().enumerate() {
        if let Some(c) = *l {
            if c >= classes {
                return Err(Error::Data(format!(
                    "label {c} at frame {frame} is outside [0, {classes})"
                )));
            }
        }
    }
    let n = labels.iter().filter(|l| l.is_some()).count();
    if n == 0 {
        return Err(Error::Contract(
            "cross-entropy over a window with no labelled frames".into(),
        ));
    }
    let inv_n = T::one() / T::of(n as f64);
    let mut grad = Tensor2::zeros(rows, classes);
    let mut loss = T::zero();
    for (r, l) in labels.iter().enumerate() {
        let Some(c) = *l else { continue };
        let row = logits.row(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss += lse - row[c];
        let g = grad.row_mut(r);
        g.copy_from_slice(row);
        softmax_in_place(g);
        g[c] -= T::one();
        g.iter_mut().for_each(|v| *v *= inv_n);
    }
    Ok(LossGrad {
        loss: loss * inv_n,
        grad,
    })
}

/// Sum over steps of the squared Euclidean error; gradient `2·(pred − truth)`.
pub fn cumulative_l2<T: Real>(pred: &Tensor2<T>, truth: &Tensor2<T>) -> Result<LossGrad<T>> {
    pred.check_same_shape(truth, "cumulative_l2")?;
    let diff = pred.sub(truth);
    let loss = diff.norm_sq();
    let mut grad = diff;
    grad.scale(T::of(2.0));
    Ok(LossGrad { loss, grad })
}
