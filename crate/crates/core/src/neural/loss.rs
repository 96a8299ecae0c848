use ndarray::{Array2, ArrayView2, Axis};

use super::layer::softmax_rows;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct LossOutput<F> {
    pub loss: F,
    /// dL/d(input), already divided by the batch size.
    pub grad: Array2<F>,
    /// Predictions clamped away from 0 or 1 (binary cross-entropy only).
    pub clamped: usize,
}

fn bce_epsilon<F: Scalar>() -> F {
    F::lit(1e-12).max(F::epsilon() * F::lit(8.0))
}

/// Mean binary cross-entropy of probabilities `pred` against `target`.
pub fn bce_loss<F: Scalar>(pred: ArrayView2<'_, F>, target: ArrayView2<'_, F>) -> Result<LossOutput<F>> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "predictions {:?} vs targets {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let eps = bce_epsilon::<F>();
    let n = F::lit(pred.nrows().max(1) as f64);
    let mut clamped = 0;
    let mut loss = F::zero();
    let mut grad = Array2::zeros(pred.raw_dim());
    for ((g, &p), &t) in grad.iter_mut().zip(pred.iter()).zip(target.iter()) {
        let pc = p.max(eps).min(F::one() - eps);
        if pc != p {
            clamped += 1;
        }
        loss -= t * pc.ln() + (F::one() - t) * (F::one() - pc).ln();
        *g = (-(t / pc) + (F::one() - t) / (F::one() - pc)) / n;
    }
    Ok(LossOutput {
        loss: loss / n,
        grad,
        clamped,
    })
}

/// Mean softmax cross-entropy of `logits` against class indices.
/// The gradient is `(softmax − one_hot) / batch`.
pub fn softmax_ce_loss<F: Scalar>(logits: ArrayView2<'_, F>, targets: &[usize]) -> Result<LossOutput<F>> {
    if targets.len() != logits.nrows() {
        return Err(Error::Shape(format!(
            "{} targets for {} rows",
            targets.len(),
            logits.nrows()
        )));
    }
    let k = logits.ncols();
    if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            n_classes: k,
        });
    }
    let n = F::lit(logits.nrows().max(1) as f64);
    let probs = softmax_rows(logits);
    let mut loss = F::zero();
    for (row, &t) in logits.axis_iter(Axis(0)).zip(targets) {
        let m = row.fold(F::neg_infinity(), |a, &b| a.max(b));
        let lse = row.iter().map(|&v| (v - m).exp()).sum::<F>().ln() + m;
        loss += lse - row[t];
    }
    let mut grad = probs;
    for (mut row, &t) in grad.axis_iter_mut(Axis(0)).zip(targets) {
        row[t] -= F::one();
    }
    grad.mapv_inplace(|g| g / n);
    Ok(LossOutput {
        loss: loss / n,
        grad,
        clamped: 0,
    })
}
