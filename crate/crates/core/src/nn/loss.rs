use crate::error::{Result, ZcpError};
use crate::nn::TensorValue;

/// Mean softmax cross-entropy over the batch, returning the loss and its
/// gradient with respect to the logits.
pub fn cross_entropy_loss(logits: &TensorValue, labels: &[usize]) -> Result<(f64, TensorValue)> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(ZcpError::shape(
            "cross_entropy",
            format!("[{}, K]", labels.len()),
            format!("{s:?}"),
        ));
    }
    let (batch, classes) = (s[0], s[1]);
    if batch == 0 {
        return Err(ZcpError::Empty("cross-entropy over an empty batch".into()));
    }
    let mut grad = vec![0.0; batch * classes];
    let mut total = 0.0;
    let inv_b = 1.0 / batch as f64;
    for (n, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(ZcpError::LabelOutOfRange { label, classes });
        }
        let row = logits.row(n);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += sum.ln() + (max - row[label]);
        let g = &mut grad[n * classes..(n + 1) * classes];
        for (k, gv) in g.iter_mut().enumerate() {
            *gv = (row[k] - log_z).exp() * inv_b;
        }
        g[label] -= inv_b;
    }
    Ok((total * inv_b, TensorValue::new(vec![batch, classes], grad)?))
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
