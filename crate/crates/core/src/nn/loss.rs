use crate::linalg::Tensor;
use crate::{Error, Result};

/// Mean softmax cross-entropy of `logits [B, C]` against class labels, with
/// the gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, c) = (logits.rows(), logits.cols());
    if labels.len() != b {
        return Err(Error::shape(format!("{} labels for a batch of {b}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::invalid(format!("label {bad} out of range for {c} classes")));
    }
    let mut grad = vec![0.0; b * c];
    let mut loss = 0.0;
    for ((row, g), &label) in logits.data().chunks(c).zip(grad.chunks_mut(c)).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label];
        for (gj, v) in g.iter_mut().zip(row) {
            *gj = (v - log_z).exp() / b as f64;
        }
        g[label] -= 1.0 / b as f64;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss"));
    }
    Ok((loss / b as f64, Tensor::new(vec![b, c], grad)?))
}

/// Mean over the batch of `½‖y − t‖²` per sample, with its logit gradient.
pub fn mean_squared_error(outputs: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if outputs.shape() != targets.shape() {
        return Err(Error::shape(format!(
            "outputs {:?} and targets {:?} differ",
            outputs.shape(),
            targets.shape()
        )));
    }
    let b = outputs.rows() as f64;
    let diff = outputs.sub(targets)?;
    let loss = 0.5 * diff.data().iter().map(|d| d * d).sum::<f64>() / b;
    if !loss.is_finite() {
        return Err(Error::NonFinite("squared-error loss"));
    }
    Ok((loss, diff.scale(1.0 / b)))
}

/// Row-wise argmax, ties to the lowest index.
pub fn predictions(logits: &Tensor) -> Vec<usize> {
    logits
        .data()
        .chunks(logits.cols())
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}
