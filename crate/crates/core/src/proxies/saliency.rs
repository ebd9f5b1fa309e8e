//! Gradient-based saliency proxies over any [`Objective`].

use crate::error::Result;
use crate::nn::{ParamSet, TensorValue};
use crate::proxies::{Objective, ProxyName, ProxyScore};

pub(crate) fn grad_norm_of(params: &ParamSet) -> f64 {
    params.iter().map(|p| p.grad.frobenius_norm()).sum()
}

pub(crate) fn snip_of(params: &ParamSet) -> f64 {
    params
        .iter()
        .map(|p| p.value.data().iter().zip(p.grad.data()).map(|(t, g)| (t * g).abs()).sum::<f64>())
        .sum()
}

pub(crate) fn plain_of(params: &ParamSet) -> f64 {
    params
        .iter()
        .map(|p| p.value.data().iter().zip(p.grad.data()).map(|(t, g)| t * g).sum::<f64>())
        .sum()
}

fn with_gradient<O, F>(obj: &mut O, proxy: ProxyName, f: F) -> Result<ProxyScore>
where
    O: Objective + ?Sized,
    F: Fn(&ParamSet) -> f64,
{
    obj.loss_and_grad()?;
    if !obj.params().grads_finite() {
        return Ok(ProxyScore::degenerate(proxy));
    }
    Ok(ProxyScore::checked(proxy, f(obj.params())))
}

/// Sum over parameter tensors of the Frobenius norm of each gradient.
pub fn grad_norm<O: Objective + ?Sized>(obj: &mut O) -> Result<ProxyScore> {
    with_gradient(obj, ProxyName::GradNorm, grad_norm_of)
}

/// `Σ |θ ⊙ ∂L/∂θ|`
pub fn snip<O: Objective + ?Sized>(obj: &mut O) -> Result<ProxyScore> {
    with_gradient(obj, ProxyName::Snip, snip_of)
}

/// `Σ θ ⊙ ∂L/∂θ`, signed.
pub fn plain<O: Objective + ?Sized>(obj: &mut O) -> Result<ProxyScore> {
    with_gradient(obj, ProxyName::Plain, plain_of)
}

fn grads(params: &ParamSet) -> Vec<TensorValue> {
    params.iter().map(|p| p.grad.clone()).collect()
}

fn max_abs(values: &[TensorValue]) -> f64 {
    values
        .iter()
        .flat_map(|t| t.data())
        .fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// Step used for the gradient-difference Hessian-vector product.
pub fn grasp_epsilon(params: &ParamSet) -> f64 {
    let theta_inf = params
        .iter()
        .flat_map(|p| p.value.data())
        .fold(0.0, |m: f64, v| m.max(v.abs()));
    1e-4 / (1.0 + theta_inf)
}

/// `H v ≈ (∇L(θ + εv) − ∇L(θ)) / ε`, given `grad_at_theta = ∇L(θ)`.
/// Parameters and gradient slots are restored before returning.
pub fn hvp_forward_difference<O: Objective + ?Sized>(
    obj: &mut O,
    grad_at_theta: &[TensorValue],
    direction: &[TensorValue],
    eps: f64,
) -> Result<Vec<TensorValue>> {
    let theta = obj.params().snapshot();
    for (p, v) in obj.params_mut().iter_mut().zip(direction) {
        for (t, d) in p.value.data_mut().iter_mut().zip(v.data()) {
            *t += eps * d;
        }
    }
    let perturbed = obj.loss_and_grad().map(|_| grads(obj.params()));
    obj.params_mut().restore(&theta)?;
    for (p, g) in obj.params_mut().iter_mut().zip(grad_at_theta) {
        p.grad.data_mut().copy_from_slice(g.data());
    }
    let perturbed = perturbed?;
    Ok(perturbed
        .iter()
        .zip(grad_at_theta)
        .map(|(gp, g)| {
            let data = gp.data().iter().zip(g.data()).map(|(a, b)| (a - b) / eps).collect();
            TensorValue::new(g.shape().to_vec(), data).expect("same shape")
        })
        .collect())
}

/// `Σ −(H g ⊙ θ)` with `g = ∇L(θ)`.
pub fn grasp<O: Objective + ?Sized>(obj: &mut O) -> Result<ProxyScore> {
    obj.loss_and_grad()?;
    grasp_with_current_grad(obj)
}

/// GraSP assuming the gradient slots already hold `∇L(θ)`.
pub(crate) fn grasp_with_current_grad<O: Objective + ?Sized>(obj: &mut O) -> Result<ProxyScore> {
    if !obj.params().grads_finite() {
        return Ok(ProxyScore::degenerate(ProxyName::Grasp));
    }
    let g = grads(obj.params());
    if max_abs(&g) == 0.0 {
        return Ok(ProxyScore::checked(ProxyName::Grasp, 0.0));
    }
    let eps = grasp_epsilon(obj.params());
    let hg = hvp_forward_difference(obj, &g, &g, eps)?;
    let score: f64 = obj
        .params()
        .iter()
        .zip(&hg)
        .map(|(p, h)| -p.value.data().iter().zip(h.data()).map(|(t, hv)| hv * t).sum::<f64>())
        .sum();
    Ok(ProxyScore::checked(ProxyName::Grasp, score))
}
