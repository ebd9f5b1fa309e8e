//! Zero-cost proxies: scores computed from an untrained network with at
//! most one batch of data. Every score is oriented so that higher is better.

mod ensemble;
mod fisher;
mod jacob_cov;
mod saliency;
mod synflow;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::WindowedDataset;
use crate::error::{Result, ZcpError};
use crate::nn::{cross_entropy_loss, Model, ParamSet, TensorValue};
use crate::train::macro_f1;

pub use ensemble::{ensemble, normalized_ranks};
pub use fisher::{fisher, fisher_from_activations};
pub use jacob_cov::{jacob_cov, jacob_cov_from_jacobian, JACOB_COV_K};
pub use saliency::{grad_norm, grasp, grasp_epsilon, hvp_forward_difference, plain, snip};
pub use synflow::{synflow, synflow_bn};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyName {
    GradNorm,
    Snip,
    Grasp,
    Fisher,
    Synflow,
    SynflowBn,
    Plain,
    JacobCov,
    InitialValF1,
    Ensemble,
}

impl ProxyName {
    pub const ALL: [ProxyName; 10] = [
        ProxyName::GradNorm,
        ProxyName::Snip,
        ProxyName::Grasp,
        ProxyName::Fisher,
        ProxyName::Synflow,
        ProxyName::SynflowBn,
        ProxyName::Plain,
        ProxyName::JacobCov,
        ProxyName::InitialValF1,
        ProxyName::Ensemble,
    ];

    /// Per-architecture proxies that feed the ensemble.
    pub const COMPONENTS: [ProxyName; 9] = [
        ProxyName::GradNorm,
        ProxyName::Snip,
        ProxyName::Grasp,
        ProxyName::Fisher,
        ProxyName::Synflow,
        ProxyName::SynflowBn,
        ProxyName::Plain,
        ProxyName::JacobCov,
        ProxyName::InitialValF1,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProxyName::GradNorm => "grad_norm",
            ProxyName::Snip => "snip",
            ProxyName::Grasp => "grasp",
            ProxyName::Fisher => "fisher",
            ProxyName::Synflow => "synflow",
            ProxyName::SynflowBn => "synflow_bn",
            ProxyName::Plain => "plain",
            ProxyName::JacobCov => "jacob_cov",
            ProxyName::InitialValF1 => "initial_val_f1",
            ProxyName::Ensemble => "ensemble",
        }
    }
}

impl fmt::Display for ProxyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProxyName {
    type Err = ZcpError;

    fn from_str(s: &str) -> Result<Self> {
        ProxyName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| ZcpError::InvalidArgument(format!("unknown proxy {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyScore {
    pub proxy: ProxyName,
    #[serde(with = "crate::float_serde")]
    pub value: f64,
    /// Set when the score could not be computed as a finite number; such
    /// scores rank below every finite score.
    pub degenerate: bool,
}

impl ProxyScore {
    /// Flags non-finite values as degenerate with a `-inf` sentinel.
    pub fn checked(proxy: ProxyName, value: f64) -> Self {
        if value.is_finite() {
            Self {
                proxy,
                value,
                degenerate: false,
            }
        } else {
            Self::degenerate(proxy)
        }
    }

    pub fn degenerate(proxy: ProxyName) -> Self {
        Self {
            proxy,
            value: f64::NEG_INFINITY,
            degenerate: true,
        }
    }

    /// Value used for ranking: degenerate scores map to `-inf`.
    pub fn rank_key(&self) -> f64 {
        if self.degenerate || !self.value.is_finite() {
            f64::NEG_INFINITY
        } else {
            self.value
        }
    }
}

/// A differentiable scalar objective over a parameter set.
pub trait Objective {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    /// Evaluates the loss at the current parameters and writes its gradient
    /// into the parameter gradient slots.
    fn loss_and_grad(&mut self) -> Result<f64>;
}

/// Mean cross-entropy of a model on one fixed batch.
pub struct BatchLoss<'a> {
    pub model: &'a mut Model,
    pub inputs: &'a TensorValue,
    pub labels: &'a [usize],
}

impl<'a> BatchLoss<'a> {
    pub fn new(model: &'a mut Model, inputs: &'a TensorValue, labels: &'a [usize]) -> Self {
        Self { model, inputs, labels }
    }
}

impl Objective for BatchLoss<'_> {
    fn params(&self) -> &ParamSet {
        self.model.params()
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        self.model.params_mut()
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        let logits = self.model.forward(self.inputs)?;
        let (loss, grad) = cross_entropy_loss(&logits, self.labels)?;
        self.model.backward(&grad, false)?;
        Ok(loss)
    }
}

/// Macro F1 of the untrained model on the validation split.
pub fn initial_val_f1(model: &Model, val: &WindowedDataset) -> Result<ProxyScore> {
    if val.is_empty() {
        return Err(ZcpError::Empty("validation split".into()));
    }
    let preds = model.predict(&val.windows, 256)?;
    Ok(ProxyScore::checked(ProxyName::InitialValF1, macro_f1(&preds, &val.labels)?))
}

/// Computes the requested per-architecture proxies, sharing forward and
/// backward passes where possible. Scoring runs with dropout disabled.
/// `Ensemble` is not per-architecture and is rejected here.
pub fn score_model(
    model: &mut Model,
    inputs: &TensorValue,
    labels: &[usize],
    val: &WindowedDataset,
    proxies: &[ProxyName],
) -> Result<Vec<ProxyScore>> {
    if proxies.contains(&ProxyName::Ensemble) {
        return Err(ZcpError::InvalidArgument(
            "ensemble is computed across architectures, not per model".into(),
        ));
    }
    let was_deterministic = model.is_deterministic();
    model.set_deterministic(true);
    let result = score_model_inner(model, inputs, labels, val, proxies);
    model.set_deterministic(was_deterministic);
    result
}

fn score_model_inner(
    model: &mut Model,
    inputs: &TensorValue,
    labels: &[usize],
    val: &WindowedDataset,
    proxies: &[ProxyName],
) -> Result<Vec<ProxyScore>> {
    use ProxyName::*;
    let wants = |p: ProxyName| proxies.contains(&p);
    let mut found: Vec<ProxyScore> = Vec::with_capacity(proxies.len());

    if [GradNorm, Snip, Plain, Fisher, Grasp].into_iter().any(wants) {
        let logits = model.forward_retaining(inputs)?;
        let (_, grad) = cross_entropy_loss(&logits, labels)?;
        let out = model.backward(&grad, false)?;
        let finite = model.params().grads_finite();
        let score = |p: ProxyName, v: f64| {
            if finite {
                ProxyScore::checked(p, v)
            } else {
                ProxyScore::degenerate(p)
            }
        };
        if wants(GradNorm) {
            found.push(score(GradNorm, saliency::grad_norm_of(model.params())));
        }
        if wants(Snip) {
            found.push(score(Snip, saliency::snip_of(model.params())));
        }
        if wants(Plain) {
            found.push(score(Plain, saliency::plain_of(model.params())));
        }
        if wants(Fisher) {
            found.push(score(Fisher, fisher_from_activations(&out.activation_grads)));
        }
        if wants(Grasp) {
            let mut obj = BatchLoss::new(model, inputs, labels);
            found.push(saliency::grasp_with_current_grad(&mut obj)?);
        }
    }
    if wants(JacobCov) {
        found.push(jacob_cov(model, inputs)?);
    }
    if wants(Synflow) || wants(SynflowBn) {
        let s = synflow(model)?;
        if wants(Synflow) {
            found.push(s);
        }
        if wants(SynflowBn) {
            found.push(ProxyScore { proxy: SynflowBn, ..s });
        }
    }
    if wants(InitialValF1) {
        found.push(initial_val_f1(model, val)?);
    }
    Ok(proxies
        .iter()
        .map(|p| *found.iter().find(|s| s.proxy == *p).expect("every requested proxy computed"))
        .collect())
}
