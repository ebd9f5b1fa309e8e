use crate::error::Result;
use crate::nn::{Model, TensorValue};
use crate::proxies::{ProxyName, ProxyScore};

/// Data-free synaptic flow: with every parameter replaced by its absolute
/// value, feed an all-ones input, take `R = Σ logits`, and score
/// `Σ |θ ⊙ ∂R/∂θ|`. Parameters are restored afterwards.
pub fn synflow(model: &mut Model) -> Result<ProxyScore> {
    let saved = model.params().snapshot();
    let was = model.is_deterministic();
    model.set_deterministic(true);
    for p in model.params_mut().iter_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = v.abs());
    }
    let result = synflow_abs(model);
    model.params_mut().restore(&saved)?;
    model.params_mut().zero_grad();
    model.set_deterministic(was);
    result
}

fn synflow_abs(model: &mut Model) -> Result<ProxyScore> {
    let ones = TensorValue::full(&[1, model.input_channels(), model.seq_len()], 1.0);
    let logits = model.forward(&ones)?;
    let upstream = TensorValue::full(logits.shape(), 1.0);
    model.backward(&upstream, false)?;
    let score: f64 = model
        .params()
        .iter()
        .map(|p| p.value.data().iter().zip(p.grad.data()).map(|(t, g)| (t * g).abs()).sum::<f64>())
        .sum();
    Ok(ProxyScore::checked(ProxyName::Synflow, score))
}

/// Synflow without suppressing normalisation parameters. The search space
/// has no normalisation layers, so this equals [`synflow`].
pub fn synflow_bn(model: &mut Model) -> Result<ProxyScore> {
    let s = synflow(model)?;
    Ok(ProxyScore {
        proxy: ProxyName::SynflowBn,
        ..s
    })
}
