use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZcpError};
use crate::nn::TensorValue;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    ConvKernel,
    ConvBias,
    LinearWeight,
    LinearBias,
    LstmGateWeights,
    LstmGateBiases,
}

impl ParamRole {
    pub fn is_bias(self) -> bool {
        matches!(
            self,
            ParamRole::ConvBias | ParamRole::LinearBias | ParamRole::LstmGateBiases
        )
    }
}

/// One trainable tensor with its gradient slot.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub role: ParamRole,
    pub value: TensorValue,
    pub grad: TensorValue,
}

impl Parameter {
    pub fn new(name: impl Into<String>, role: ParamRole, value: TensorValue) -> Self {
        let grad = TensorValue::zeros(value.shape());
        Self {
            name: name.into(),
            role,
            value,
            grad,
        }
    }

    /// Glorot fan-in/fan-out following the usual conventions for each
    /// layout: `[out, in, k]` for conv kernels, `[out, in]` otherwise.
    pub fn fans(&self) -> (usize, usize) {
        let s = self.value.shape();
        match s.len() {
            0 => (1, 1),
            1 => (s[0], s[0]),
            _ => {
                let receptive: usize = s[2..].iter().product();
                (s[1] * receptive, s[0] * receptive)
            }
        }
    }
}

/// Ordered collection of the trainable parameters of a model.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter and returns its index.
    pub fn push(&mut self, param: Parameter) -> Result<usize> {
        if self.params.iter().any(|p| p.name == param.name) {
            return Err(ZcpError::InvalidArgument(format!(
                "duplicate parameter name {}",
                param.name
            )));
        }
        self.params.push(param);
        Ok(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Parameter {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Parameter {
        &mut self.params[idx]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Parameter> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Copies of every parameter value, in order.
    pub fn snapshot(&self) -> Vec<TensorValue> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, values: &[TensorValue]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(ZcpError::InvalidArgument(format!(
                "snapshot has {} tensors, model has {}",
                values.len(),
                self.params.len()
            )));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(ZcpError::shape(&p.name, format!("{:?}", p.value.shape()), format!("{:?}", v.shape())));
            }
            p.value.data_mut().copy_from_slice(v.data());
        }
        Ok(())
    }

    pub fn grads_finite(&self) -> bool {
        self.params.iter().all(|p| p.grad.is_finite())
    }
}

/// Xavier (Glorot) normal initialisation; biases start at zero.
pub fn xavier_normal_init(params: &mut ParamSet, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in params.iter_mut() {
        if p.role.is_bias() {
            p.value.fill(0.0);
            continue;
        }
        let std = xavier_std(p.fans());
        let normal = Normal::new(0.0, std).expect("finite std");
        for v in p.value.data_mut() {
            *v = normal.sample(&mut rng);
        }
    }
}

pub fn xavier_std((fan_in, fan_out): (usize, usize)) -> f64 {
    (2.0 / (fan_in + fan_out) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> ParamSet {
        let mut ps = ParamSet::new();
        ps.push(Parameter::new("w", ParamRole::LinearWeight, TensorValue::zeros(&[8, 8])))
            .unwrap();
        ps.push(Parameter::new("b", ParamRole::LinearBias, TensorValue::full(&[8], 3.0)))
            .unwrap();
        ps
    }

    #[test]
    fn glorot_std_for_square_layer() {
        assert!((xavier_std((8, 8)) - 0.353_553_390_593_273_8).abs() < 1e-15);
    }

    #[test]
    fn conv_fans_include_receptive_field() {
        let p = Parameter::new("k", ParamRole::ConvKernel, TensorValue::zeros(&[16, 3, 5]));
        assert_eq!(p.fans(), (15, 80));
    }

    #[test]
    fn biases_zeroed_and_seeded_draws_repeat() {
        let mut a = sample_set();
        let mut b = sample_set();
        xavier_normal_init(&mut a, 7);
        xavier_normal_init(&mut b, 7);
        assert!(a.get(1).value.data().iter().all(|&v| v == 0.0));
        assert_eq!(a.get(0).value, b.get(0).value);
        let mut c = sample_set();
        xavier_normal_init(&mut c, 8);
        assert_ne!(a.get(0).value, c.get(0).value);
    }

    #[test]
    fn empirical_std_matches_glorot() {
        let mut ps = ParamSet::new();
        ps.push(Parameter::new("w", ParamRole::LinearWeight, TensorValue::zeros(&[300, 300])))
            .unwrap();
        xavier_normal_init(&mut ps, 1);
        let d = ps.get(0).value.data();
        let var = d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
        let expected = xavier_std((300, 300));
        assert!((var.sqrt() - expected).abs() / expected < 0.02);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut ps = sample_set();
        let dup = Parameter::new("w", ParamRole::LinearWeight, TensorValue::zeros(&[1]));
        assert!(ps.push(dup).is_err());
    }
}
