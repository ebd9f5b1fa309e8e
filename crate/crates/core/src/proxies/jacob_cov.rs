use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, ZcpError};
use crate::nn::{Model, TensorValue};
use crate::proxies::{ProxyName, ProxyScore};

/// Regulariser added to every eigenvalue.
pub const JACOB_COV_K: f64 = 1e-5;

/// Jacobian of each sample's summed logits with respect to its input,
/// scored by the eigenvalues of the row-correlation matrix.
pub fn jacob_cov(model: &mut Model, inputs: &TensorValue) -> Result<ProxyScore> {
    let was = model.is_deterministic();
    model.set_deterministic(true);
    let logits = model.forward(inputs);
    model.set_deterministic(was);
    let logits = logits?;
    let upstream = TensorValue::full(logits.shape(), 1.0);
    let out = model.backward(&upstream, true)?;
    let jac = out.input_grad.expect("input gradient requested");
    jacob_cov_from_jacobian(&jac)
}

/// `−Σ_i [ln(ν_i + k) + 1/(ν_i + k)]` over the eigenvalues `ν_i` of the
/// correlation matrix of the Jacobian rows. A constant row has no defined
/// correlation and yields a degenerate score.
pub fn jacob_cov_from_jacobian(jac: &TensorValue) -> Result<ProxyScore> {
    let rows = jac.batch();
    if rows == 0 {
        return Err(ZcpError::Empty("jacobian batch".into()));
    }
    let width = jac.row_len();
    let mut z = DMatrix::<f64>::zeros(rows, width);
    for i in 0..rows {
        let r = jac.row(i);
        let m = r.iter().sum::<f64>() / width as f64;
        let norm = r.iter().map(|v| (v - m) * (v - m)).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Ok(ProxyScore::degenerate(ProxyName::JacobCov));
        }
        for (j, v) in r.iter().enumerate() {
            z[(i, j)] = (v - m) / norm;
        }
    }
    let corr = &z * z.transpose();
    let eig = SymmetricEigen::new(corr);
    // Round-off can push eigenvalues of the PSD matrix slightly negative.
    let score = -eig
        .eigenvalues
        .iter()
        .map(|&v| {
            let s = v.max(0.0) + JACOB_COV_K;
            s.ln() + 1.0 / s
        })
        .sum::<f64>();
    Ok(ProxyScore::checked(ProxyName::JacobCov, score))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn functional(eigs: &[f64]) -> f64 {
        -eigs
            .iter()
            .map(|v| (v + JACOB_COV_K).ln() + 1.0 / (v + JACOB_COV_K))
            .sum::<f64>()
    }

    #[test]
    fn duplicate_rows_hit_the_singular_penalty() {
        let jac = TensorValue::new(vec![2, 4], vec![1.0, 2.0, 0.5, -1.0, 1.0, 2.0, 0.5, -1.0]).unwrap();
        let s = jacob_cov_from_jacobian(&jac).unwrap();
        assert!(!s.degenerate);
        assert!((s.value - functional(&[2.0, 0.0])).abs() < 1e-6 * s.value.abs());
        assert!(s.value < -0.99 / JACOB_COV_K);
    }

    #[test]
    fn orthogonal_rows_give_identity() {
        // Zero-mean, mutually orthogonal rows.
        let jac = TensorValue::new(
            vec![3, 4],
            vec![1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0, 1.0],
        )
        .unwrap();
        let s = jacob_cov_from_jacobian(&jac).unwrap();
        let expected = -3.0 * ((1.0 + JACOB_COV_K).ln() + 1.0 / (1.0 + JACOB_COV_K));
        assert!((s.value - expected).abs() < 1e-12);
    }

    #[test]
    fn single_row_scores_about_minus_one() {
        let jac = TensorValue::new(vec![1, 3], vec![0.1, 0.5, -0.2]).unwrap();
        let s = jacob_cov_from_jacobian(&jac).unwrap();
        assert!((s.value - functional(&[1.0])).abs() < 1e-12);
        assert!((s.value + 1.0).abs() < 1e-4);
    }

    #[test]
    fn constant_row_is_degenerate() {
        let jac = TensorValue::new(vec![2, 3], vec![1.0, 1.0, 1.0, 0.0, 1.0, 2.0]).unwrap();
        let s = jacob_cov_from_jacobian(&jac).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.value, f64::NEG_INFINITY);
    }
}
