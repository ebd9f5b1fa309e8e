use crate::error::Result;
use crate::nn::{cross_entropy_loss, ActivationGrad, Model, TensorValue};
use crate::proxies::{ProxyName, ProxyScore};

/// Channel-wise Fisher saliency summed over layers. For each channel `c`
/// of a block output: `(Σ_{batch, time} a_c · ∂L/∂a_c)²`.
pub fn fisher_from_activations(pairs: &[ActivationGrad]) -> f64 {
    pairs.iter().map(|p| layer_fisher(&p.activation, &p.grad)).sum()
}

fn layer_fisher(act: &TensorValue, grad: &TensorValue) -> f64 {
    let s = act.shape();
    let (batch, channels) = (s[0], s.get(1).copied().unwrap_or(1));
    let len: usize = s.iter().skip(2).product();
    let (a, g) = (act.data(), grad.data());
    (0..channels)
        .map(|c| {
            let mut inner = 0.0;
            for n in 0..batch {
                let base = (n * channels + c) * len;
                for t in base..base + len {
                    inner += a[t] * g[t];
                }
            }
            inner * inner
        })
        .sum()
}

pub fn fisher(model: &mut Model, inputs: &TensorValue, labels: &[usize]) -> Result<ProxyScore> {
    let was = model.is_deterministic();
    model.set_deterministic(true);
    let logits = model.forward_retaining(inputs);
    model.set_deterministic(was);
    let (_, grad) = cross_entropy_loss(&logits?, labels)?;
    let out = model.backward(&grad, false)?;
    Ok(ProxyScore::checked(ProxyName::Fisher, fisher_from_activations(&out.activation_grads)))
}
