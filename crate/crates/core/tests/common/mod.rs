#![allow(dead_code)]

pub mod metrics;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zcp_har::nn::{cross_entropy_loss, xavier_normal_init, Model, ModelBuilder, ParamRole, ParamSet, Parameter, TensorValue};
use zcp_har::proxies::Objective;
use zcp_har::Result;

/// `L(θ) = Σ θ²` over a parameter set.
pub struct SquareLoss {
    pub params: ParamSet,
}

impl SquareLoss {
    pub fn scalar(theta: f64) -> Self {
        Self::vector(&[theta])
    }

    pub fn vector(theta: &[f64]) -> Self {
        let mut params = ParamSet::new();
        params
            .push(Parameter::new(
                "theta",
                ParamRole::LinearWeight,
                TensorValue::new(vec![theta.len()], theta.to_vec()).unwrap(),
            ))
            .unwrap();
        Self { params }
    }
}

impl Objective for SquareLoss {
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
    fn loss_and_grad(&mut self) -> Result<f64> {
        let p = self.params.get_mut(0);
        let loss = p.value.data().iter().map(|t| t * t).sum();
        let g: Vec<f64> = p.value.data().iter().map(|t| 2.0 * t).collect();
        p.grad.data_mut().copy_from_slice(&g);
        Ok(loss)
    }
}

/// `L(θ) = ½ θᵀ A θ` with symmetric `A` (row-major `n × n`).
pub struct Quadratic {
    pub a: Vec<f64>,
    pub n: usize,
    pub params: ParamSet,
}

impl Quadratic {
    pub fn new(a: Vec<f64>, theta: &[f64]) -> Self {
        let n = theta.len();
        let mut params = ParamSet::new();
        params
            .push(Parameter::new(
                "theta",
                ParamRole::LinearWeight,
                TensorValue::new(vec![n], theta.to_vec()).unwrap(),
            ))
            .unwrap();
        Self { a, n, params }
    }

    pub fn random(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(-2.0..2.0);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        Self::new(a, &theta)
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.a[i * self.n + j] * v[j]).sum())
            .collect()
    }

    pub fn theta(&self) -> Vec<f64> {
        self.params.get(0).value.data().to_vec()
    }
}

impl Objective for Quadratic {
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
    fn loss_and_grad(&mut self) -> Result<f64> {
        let theta = self.theta();
        let g = self.mat_vec(&theta);
        let loss = 0.5 * theta.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        self.params.get_mut(0).grad.data_mut().copy_from_slice(&g);
        Ok(loss)
    }
}

/// Scales another objective's loss by a constant.
pub struct Scaled<O> {
    pub inner: O,
    pub c: f64,
}

impl<O: Objective> Objective for Scaled<O> {
    fn params(&self) -> &ParamSet {
        self.inner.params()
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        self.inner.params_mut()
    }
    fn loss_and_grad(&mut self) -> Result<f64> {
        let loss = self.inner.loss_and_grad()?;
        let c = self.c;
        for p in self.inner.params_mut().iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= c);
        }
        Ok(loss * c)
    }
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> TensorValue {
    let n = shape.iter().product();
    TensorValue::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_labels(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..k)).collect()
}

/// Perturbs every bias away from zero so bias gradients are exercised in
/// gradient checks.
pub fn jitter_biases(model: &mut Model, rng: &mut ChaCha8Rng) {
    for p in model.params_mut().iter_mut() {
        if p.role.is_bias() {
            p.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
    }
}

pub fn ce_loss(model: &mut Model, x: &TensorValue, y: &[usize]) -> f64 {
    let logits = model.infer(x).unwrap();
    cross_entropy_loss(&logits, y).unwrap().0
}

/// Relative error between analytic and central-difference gradients over
/// every parameter scalar (step `h`).
pub fn gradient_check(model: &mut Model, x: &TensorValue, y: &[usize], h: f64) -> f64 {
    model.set_deterministic(true);
    let logits = model.forward(x).unwrap();
    let (_, g) = cross_entropy_loss(&logits, y).unwrap();
    model.backward(&g, false).unwrap();
    let analytic: Vec<f64> = model.params().iter().flat_map(|p| p.grad.data().to_vec()).collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    for pi in 0..model.params().len() {
        for k in 0..model.params().get(pi).value.len() {
            let orig = model.params().get(pi).value.data()[k];
            model.params_mut().get_mut(pi).value.data_mut()[k] = orig + h;
            let lp = ce_loss(model, x, y);
            model.params_mut().get_mut(pi).value.data_mut()[k] = orig - h;
            let lm = ce_loss(model, x, y);
            model.params_mut().get_mut(pi).value.data_mut()[k] = orig;
            numeric.push((lp - lm) / (2.0 * h));
        }
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

pub fn tiny_conv_model(rng: &mut ChaCha8Rng) -> Model {
    let c1 = rng.gen_range(1..4);
    let k1 = rng.gen_range(1..4);
    let mut m = ModelBuilder::new(2, 9)
        .conv1d(c1, k1)
        .unwrap()
        .relu()
        .dropout(0.3)
        .unwrap()
        .conv1d(rng.gen_range(1..4), rng.gen_range(1..3))
        .unwrap()
        .relu()
        .global_avg_pool()
        .unwrap()
        .linear(3)
        .unwrap()
        .build()
        .unwrap();
    xavier_normal_init(m.params_mut(), rng.gen());
    jitter_biases(&mut m, rng);
    m
}

pub fn tiny_linear_model(rng: &mut ChaCha8Rng) -> Model {
    let mut m = ModelBuilder::new(rng.gen_range(1..5), rng.gen_range(1..5))
        .global_avg_pool()
        .unwrap()
        .linear(rng.gen_range(2..5))
        .unwrap()
        .relu()
        .linear(3)
        .unwrap()
        .build()
        .unwrap();
    xavier_normal_init(m.params_mut(), rng.gen());
    jitter_biases(&mut m, rng);
    m
}

pub fn tiny_lstm_model(rng: &mut ChaCha8Rng) -> Model {
    let mut m = ModelBuilder::new(2, rng.gen_range(2..5))
        .lstm(rng.gen_range(1..4))
        .unwrap()
        .dropout(0.2)
        .unwrap()
        .lstm(2)
        .unwrap()
        .last_step()
        .unwrap()
        .linear(3)
        .unwrap()
        .build()
        .unwrap();
    xavier_normal_init(m.params_mut(), rng.gen());
    jitter_biases(&mut m, rng);
    m
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Moderate search space used where full-range widths would be too slow.
pub fn desk_space(sample_count: usize) -> zcp_har::arch::SearchSpaceConfig {
    use zcp_har::arch::{IntRange, SearchSpaceConfig};
    SearchSpaceConfig {
        cnn_depth: IntRange::new(1, 3, 1),
        cnn_channels: IntRange::new(8, 32, 8),
        cnn_kernel: IntRange::new(2, 9, 1),
        lstm_depth: IntRange::new(2, 3, 1),
        lstm_hidden: IntRange::new(8, 32, 8),
        sample_count,
        ..Default::default()
    }
}
