use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over the batch. Returns the loss and the
/// per-class probabilities `(B, K)`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f32, Tensor)> {
    let (b, k) = logits.dims2("softmax_cross_entropy logits")?;
    if labels.len() != b {
        return Err(Error::shape("softmax_cross_entropy labels", b, labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    if b == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut probs = logits.clone();
    let mut total = 0.0f64;
    for (row, &label) in probs.data_mut().chunks_mut(k).zip(labels) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let shifted = f64::from(row[label] - max);
        let mut z = 0.0f64;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += f64::from(*v);
        }
        total += z.ln() - shifted;
        let inv = (1.0 / z) as f32;
        row.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(((total / b as f64) as f32, probs))
}

/// Gradient of the mean loss with respect to the logits.
pub fn softmax_cross_entropy_backward(probs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (b, k) = probs.dims2("softmax_cross_entropy probs")?;
    if labels.len() != b {
        return Err(Error::shape("softmax_cross_entropy labels", b, labels.len()));
    }
    let mut g = probs.clone();
    let scale = 1.0 / b as f32;
    for (row, &label) in g.data_mut().chunks_mut(k).zip(labels) {
        row[label] -= 1.0;
        row.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(g)
}
