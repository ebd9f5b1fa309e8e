use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, ZcpError};
use crate::nn::lstm::{lstm_backward, lstm_forward, LstmCache};
use crate::nn::ops;
use crate::nn::{ParamRole, ParamSet, Parameter, TensorValue};

/// One stage of a sequential network. Parameter fields are indices into the
/// owning model's [`ParamSet`].
#[derive(Clone, Debug)]
pub enum Layer {
    Conv1d {
        c_in: usize,
        c_out: usize,
        kernel: usize,
        weight: usize,
        bias: usize,
    },
    Relu,
    Dropout {
        p: f64,
    },
    GlobalAvgPool,
    Lstm {
        input: usize,
        hidden: usize,
        w_ih: usize,
        w_hh: usize,
        bias: usize,
    },
    /// Selects the final time step of a `[B, C, T]` sequence.
    LastStep,
    Linear {
        d_in: usize,
        d_out: usize,
        weight: usize,
        bias: usize,
    },
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv1d { .. } => "conv1d",
            Layer::Relu => "relu",
            Layer::Dropout { .. } => "dropout",
            Layer::GlobalAvgPool => "global_avg_pool",
            Layer::Lstm { .. } => "lstm",
            Layer::LastStep => "last_step",
            Layer::Linear { .. } => "linear",
        }
    }

    /// Whether this layer's output counts as a block activation (post
    /// nonlinearity) for activation-level saliency.
    pub fn is_block_output(&self) -> bool {
        matches!(self, Layer::Relu | Layer::Lstm { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    Seq { channels: usize, len: usize },
    Flat { features: usize },
}

impl Shape {
    fn dims(self, batch: usize) -> Vec<usize> {
        match self {
            Shape::Seq { channels, len } => vec![batch, channels, len],
            Shape::Flat { features } => vec![batch, features],
        }
    }
}

/// Incremental construction of a [`Model`] with shape checking at each step.
#[derive(Debug)]
pub struct ModelBuilder {
    input_channels: usize,
    seq_len: usize,
    shape: Shape,
    layers: Vec<Layer>,
    params: ParamSet,
}

impl ModelBuilder {
    pub fn new(input_channels: usize, seq_len: usize) -> Self {
        Self {
            input_channels,
            seq_len,
            shape: Shape::Seq {
                channels: input_channels,
                len: seq_len,
            },
            layers: Vec::new(),
            params: ParamSet::new(),
        }
    }

    fn layer_name(&self) -> String {
        format!("layer {}", self.layers.len())
    }

    fn expect_seq(&self, what: &str) -> Result<(usize, usize)> {
        match self.shape {
            Shape::Seq { channels, len } => Ok((channels, len)),
            Shape::Flat { features } => Err(ZcpError::shape(
                format!("{} ({what})", self.layer_name()),
                "sequence input",
                format!("flat[{features}]"),
            )),
        }
    }

    pub fn conv1d(mut self, c_out: usize, kernel: usize) -> Result<Self> {
        let (c_in, len) = self.expect_seq("conv1d")?;
        if kernel == 0 || kernel > len || c_out == 0 {
            return Err(ZcpError::shape(
                format!("{} (conv1d)", self.layer_name()),
                format!("kernel in 1..={len} and channels > 0"),
                format!("kernel {kernel}, channels {c_out}"),
            ));
        }
        let i = self.layers.len();
        let weight = self.params.push(Parameter::new(
            format!("{i}.conv.weight"),
            ParamRole::ConvKernel,
            TensorValue::zeros(&[c_out, c_in, kernel]),
        ))?;
        let bias = self.params.push(Parameter::new(
            format!("{i}.conv.bias"),
            ParamRole::ConvBias,
            TensorValue::zeros(&[c_out]),
        ))?;
        self.layers.push(Layer::Conv1d {
            c_in,
            c_out,
            kernel,
            weight,
            bias,
        });
        self.shape = Shape::Seq {
            channels: c_out,
            len: len + 1 - kernel,
        };
        Ok(self)
    }

    pub fn relu(mut self) -> Self {
        self.layers.push(Layer::Relu);
        self
    }

    pub fn dropout(mut self, p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(ZcpError::InvalidArgument(format!("dropout rate {p} outside [0, 1)")));
        }
        self.layers.push(Layer::Dropout { p });
        Ok(self)
    }

    pub fn global_avg_pool(mut self) -> Result<Self> {
        let (channels, _) = self.expect_seq("global_avg_pool")?;
        self.layers.push(Layer::GlobalAvgPool);
        self.shape = Shape::Flat { features: channels };
        Ok(self)
    }

    pub fn lstm(mut self, hidden: usize) -> Result<Self> {
        let (input, len) = self.expect_seq("lstm")?;
        if hidden == 0 {
            return Err(ZcpError::InvalidArgument("lstm hidden size must be positive".into()));
        }
        let i = self.layers.len();
        let w_ih = self.params.push(Parameter::new(
            format!("{i}.lstm.weight_ih"),
            ParamRole::LstmGateWeights,
            TensorValue::zeros(&[4 * hidden, input]),
        ))?;
        let w_hh = self.params.push(Parameter::new(
            format!("{i}.lstm.weight_hh"),
            ParamRole::LstmGateWeights,
            TensorValue::zeros(&[4 * hidden, hidden]),
        ))?;
        let bias = self.params.push(Parameter::new(
            format!("{i}.lstm.bias"),
            ParamRole::LstmGateBiases,
            TensorValue::zeros(&[4 * hidden]),
        ))?;
        self.layers.push(Layer::Lstm {
            input,
            hidden,
            w_ih,
            w_hh,
            bias,
        });
        self.shape = Shape::Seq { channels: hidden, len };
        Ok(self)
    }

    pub fn last_step(mut self) -> Result<Self> {
        let (channels, _) = self.expect_seq("last_step")?;
        self.layers.push(Layer::LastStep);
        self.shape = Shape::Flat { features: channels };
        Ok(self)
    }

    pub fn linear(mut self, d_out: usize) -> Result<Self> {
        let d_in = match self.shape {
            Shape::Flat { features } => features,
            Shape::Seq { channels, len } => {
                return Err(ZcpError::shape(
                    format!("{} (linear)", self.layer_name()),
                    "flat input",
                    format!("seq[{channels}x{len}]"),
                ))
            }
        };
        let i = self.layers.len();
        let weight = self.params.push(Parameter::new(
            format!("{i}.linear.weight"),
            ParamRole::LinearWeight,
            TensorValue::zeros(&[d_out, d_in]),
        ))?;
        let bias = self.params.push(Parameter::new(
            format!("{i}.linear.bias"),
            ParamRole::LinearBias,
            TensorValue::zeros(&[d_out]),
        ))?;
        self.layers.push(Layer::Linear {
            d_in,
            d_out,
            weight,
            bias,
        });
        self.shape = Shape::Flat { features: d_out };
        Ok(self)
    }

    /// Finishes the model; the network must end in a flat output.
    pub fn build(self) -> Result<Model> {
        let num_classes = match self.shape {
            Shape::Flat { features } => features,
            Shape::Seq { .. } => {
                return Err(ZcpError::shape("output", "flat logits", "sequence"));
            }
        };
        Ok(Model {
            layers: self.layers,
            params: self.params,
            input_channels: self.input_channels,
            seq_len: self.seq_len,
            num_classes,
            deterministic: true,
            rng: ChaCha8Rng::seed_from_u64(0),
            tape: None,
        })
    }
}

#[derive(Clone, Debug)]
enum LayerCache {
    Conv { input: Vec<f64>, len: usize },
    Relu { output: Vec<f64> },
    Dropout { mask: Option<Vec<f64>> },
    Pool { len: usize },
    Lstm(LstmCache),
    LastStep { channels: usize, len: usize },
    Linear { input: Vec<f64> },
}

#[derive(Clone, Debug)]
struct Tape {
    batch: usize,
    caches: Vec<LayerCache>,
    /// Block-output activations keyed by layer index, when retained.
    activations: Vec<(usize, TensorValue)>,
}

/// Activation and its loss gradient at one block output.
#[derive(Clone, Debug)]
pub struct ActivationGrad {
    pub layer: usize,
    pub activation: TensorValue,
    pub grad: TensorValue,
}

#[derive(Clone, Debug, Default)]
pub struct BackwardOutput {
    /// Gradient with respect to the network input, `[B, C, T]`.
    pub input_grad: Option<TensorValue>,
    pub activation_grads: Vec<ActivationGrad>,
}

/// A sequential network together with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    layers: Vec<Layer>,
    params: ParamSet,
    input_channels: usize,
    seq_len: usize,
    num_classes: usize,
    deterministic: bool,
    rng: ChaCha8Rng,
    tape: Option<Tape>,
}

impl Model {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    /// Deterministic mode disables dropout.
    pub fn set_deterministic(&mut self, deterministic: bool) {
        self.deterministic = deterministic;
    }

    pub fn seed_dropout(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Forward pass that records the tape for a subsequent [`Model::backward`].
    pub fn forward(&mut self, x: &TensorValue) -> Result<TensorValue> {
        self.forward_impl(x, false)
    }

    /// As [`Model::forward`], additionally keeping block-output activations.
    pub fn forward_retaining(&mut self, x: &TensorValue) -> Result<TensorValue> {
        self.forward_impl(x, true)
    }

    fn forward_impl(&mut self, x: &TensorValue, retain: bool) -> Result<TensorValue> {
        self.check_input(x)?;
        let mut rng = (!self.deterministic).then_some(&mut self.rng);
        let (out, tape) = run_layers(&self.layers, &self.params, x, rng.as_deref_mut(), true, retain)?;
        self.tape = tape;
        Ok(out)
    }

    /// Inference without recording a tape; always deterministic.
    pub fn infer(&self, x: &TensorValue) -> Result<TensorValue> {
        self.check_input(x)?;
        let (out, _) = run_layers(&self.layers, &self.params, x, None, false, false)?;
        Ok(out)
    }

    /// Predicted class per sample, evaluated in chunks of `chunk` rows.
    pub fn predict(&self, x: &TensorValue, chunk: usize) -> Result<Vec<usize>> {
        let n = x.batch();
        let mut preds = Vec::with_capacity(n);
        let chunk = chunk.max(1);
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let logits = self.infer(&x.select_rows(&idx))?;
            preds.extend((0..logits.batch()).map(|i| argmax(logits.row(i))));
            start = end;
        }
        Ok(preds)
    }

    fn check_input(&self, x: &TensorValue) -> Result<()> {
        let s = x.shape();
        if s.len() != 3 || s[1] != self.input_channels || s[2] != self.seq_len {
            return Err(ZcpError::shape(
                "input",
                format!("[B, {}, {}]", self.input_channels, self.seq_len),
                format!("{s:?}"),
            ));
        }
        Ok(())
    }

    /// Backpropagates `upstream` (the gradient of the objective with respect
    /// to the logits) through the recorded tape. Parameter gradients are
    /// overwritten, not accumulated across calls.
    pub fn backward(&mut self, upstream: &TensorValue, want_input_grad: bool) -> Result<BackwardOutput> {
        let tape = self.tape.take().ok_or(ZcpError::MissingTape)?;
        let expected = [tape.batch, self.num_classes];
        if upstream.shape() != expected {
            return Err(ZcpError::shape("logits gradient", format!("{expected:?}"), format!("{:?}", upstream.shape())));
        }
        self.params.zero_grad();
        let mut grad = upstream.data().to_vec();
        let mut activation_grads = Vec::new();
        let batch = tape.batch;
        for (li, (layer, cache)) in self.layers.iter().zip(&tape.caches).enumerate().rev() {
            if let Some((_, act)) = tape.activations.iter().find(|(l, _)| *l == li) {
                activation_grads.push(ActivationGrad {
                    layer: li,
                    activation: act.clone(),
                    grad: TensorValue::new(act.shape().to_vec(), grad.clone())?,
                });
            }
            grad = match (layer, cache) {
                (
                    Layer::Conv1d {
                        c_in,
                        c_out,
                        kernel,
                        weight,
                        bias,
                    },
                    LayerCache::Conv { input, len },
                ) => {
                    let w = self.params.get(*weight).value.data().to_vec();
                    let mut dw = vec![0.0; w.len()];
                    let mut db = vec![0.0; *c_out];
                    let dx = ops::conv1d_backward(input, &w, &grad, &mut dw, &mut db, batch, *c_in, *c_out, *len, *kernel);
                    add_into(&mut self.params.get_mut(*weight).grad, &dw);
                    add_into(&mut self.params.get_mut(*bias).grad, &db);
                    dx
                }
                (Layer::Relu, LayerCache::Relu { output }) => grad
                    .iter()
                    .zip(output)
                    .map(|(g, &y)| if y > 0.0 { *g } else { 0.0 })
                    .collect(),
                (Layer::Dropout { .. }, LayerCache::Dropout { mask }) => match mask {
                    Some(m) => grad.iter().zip(m).map(|(g, m)| g * m).collect(),
                    None => grad,
                },
                (Layer::GlobalAvgPool, LayerCache::Pool { len }) => ops::global_avg_pool_backward(&grad, *len),
                (Layer::Lstm { w_ih, w_hh, bias, .. }, LayerCache::Lstm(c)) => {
                    let wi = self.params.get(*w_ih).value.data().to_vec();
                    let wh = self.params.get(*w_hh).value.data().to_vec();
                    let mut dwi = vec![0.0; wi.len()];
                    let mut dwh = vec![0.0; wh.len()];
                    let mut db = vec![0.0; self.params.get(*bias).value.len()];
                    let dx = lstm_backward(c, &wi, &wh, &grad, &mut dwi, &mut dwh, &mut db);
                    add_into(&mut self.params.get_mut(*w_ih).grad, &dwi);
                    add_into(&mut self.params.get_mut(*w_hh).grad, &dwh);
                    add_into(&mut self.params.get_mut(*bias).grad, &db);
                    dx
                }
                (Layer::LastStep, LayerCache::LastStep { channels, len }) => {
                    let mut dx = vec![0.0; batch * channels * len];
                    for r in 0..batch * channels {
                        dx[r * len + len - 1] = grad[r];
                    }
                    dx
                }
                (
                    Layer::Linear {
                        d_in,
                        d_out,
                        weight,
                        bias,
                    },
                    LayerCache::Linear { input },
                ) => {
                    let w = self.params.get(*weight).value.data().to_vec();
                    let mut dw = vec![0.0; w.len()];
                    let mut db = vec![0.0; *d_out];
                    let dx = ops::linear_backward(input, &w, &grad, &mut dw, &mut db, batch, *d_in, *d_out);
                    add_into(&mut self.params.get_mut(*weight).grad, &dw);
                    add_into(&mut self.params.get_mut(*bias).grad, &db);
                    dx
                }
                _ => unreachable!("tape does not match layer {li}"),
            };
        }
        activation_grads.reverse();
        let input_grad = if want_input_grad {
            Some(TensorValue::new(vec![batch, self.input_channels, self.seq_len], grad)?)
        } else {
            None
        };
        Ok(BackwardOutput {
            input_grad,
            activation_grads,
        })
    }
}

fn add_into(t: &mut TensorValue, delta: &[f64]) {
    for (a, d) in t.data_mut().iter_mut().zip(delta) {
        *a += d;
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn run_layers(
    layers: &[Layer],
    params: &ParamSet,
    x: &TensorValue,
    mut rng: Option<&mut ChaCha8Rng>,
    record: bool,
    retain: bool,
) -> Result<(TensorValue, Option<Tape>)> {
    let batch = x.batch();
    let mut shape = Shape::Seq {
        channels: x.shape()[1],
        len: x.shape()[2],
    };
    let mut cur = x.data().to_vec();
    let mut caches = Vec::with_capacity(if record { layers.len() } else { 0 });
    let mut activations = Vec::new();
    for (li, layer) in layers.iter().enumerate() {
        let (out, cache, next_shape) = match (layer, shape) {
            (
                Layer::Conv1d {
                    c_in,
                    c_out,
                    kernel,
                    weight,
                    bias,
                },
                Shape::Seq { channels, len },
            ) if channels == *c_in => {
                let y = ops::conv1d_forward(
                    &cur,
                    params.get(*weight).value.data(),
                    params.get(*bias).value.data(),
                    batch,
                    *c_in,
                    *c_out,
                    len,
                    *kernel,
                );
                let cache = record.then(|| LayerCache::Conv {
                    input: std::mem::take(&mut cur),
                    len,
                });
                (
                    y,
                    cache,
                    Shape::Seq {
                        channels: *c_out,
                        len: len + 1 - kernel,
                    },
                )
            }
            (Layer::Relu, s) => {
                let y: Vec<f64> = cur.iter().map(|&v| v.max(0.0)).collect();
                let cache = record.then(|| LayerCache::Relu { output: y.clone() });
                (y, cache, s)
            }
            (Layer::Dropout { p }, s) => match rng.as_deref_mut() {
                Some(r) if *p > 0.0 => {
                    let keep = 1.0 / (1.0 - p);
                    let mask: Vec<f64> = (0..cur.len())
                        .map(|_| if r.gen::<f64>() < *p { 0.0 } else { keep })
                        .collect();
                    let y = cur.iter().zip(&mask).map(|(v, m)| v * m).collect();
                    (y, record.then_some(LayerCache::Dropout { mask: Some(mask) }), s)
                }
                _ => (
                    std::mem::take(&mut cur),
                    record.then_some(LayerCache::Dropout { mask: None }),
                    s,
                ),
            },
            (Layer::GlobalAvgPool, Shape::Seq { channels, len }) => (
                ops::global_avg_pool_forward(&cur, batch, channels, len),
                record.then_some(LayerCache::Pool { len }),
                Shape::Flat { features: channels },
            ),
            (
                Layer::Lstm {
                    input,
                    hidden,
                    w_ih,
                    w_hh,
                    bias,
                },
                Shape::Seq { channels, len },
            ) if channels == *input => {
                let (y, c) = lstm_forward(
                    &cur,
                    params.get(*w_ih).value.data(),
                    params.get(*w_hh).value.data(),
                    params.get(*bias).value.data(),
                    batch,
                    *input,
                    *hidden,
                    len,
                );
                (
                    y,
                    record.then_some(LayerCache::Lstm(c)),
                    Shape::Seq {
                        channels: *hidden,
                        len,
                    },
                )
            }
            (Layer::LastStep, Shape::Seq { channels, len }) => {
                let y = (0..batch * channels).map(|r| cur[r * len + len - 1]).collect();
                (
                    y,
                    record.then_some(LayerCache::LastStep { channels, len }),
                    Shape::Flat { features: channels },
                )
            }
            (
                Layer::Linear {
                    d_in,
                    d_out,
                    weight,
                    bias,
                },
                Shape::Flat { features },
            ) if features == *d_in => {
                let y = ops::linear_forward(
                    &cur,
                    params.get(*weight).value.data(),
                    params.get(*bias).value.data(),
                    batch,
                    *d_in,
                    *d_out,
                );
                let cache = record.then(|| LayerCache::Linear {
                    input: std::mem::take(&mut cur),
                });
                (y, cache, Shape::Flat { features: *d_out })
            }
            (layer, s) => {
                return Err(ZcpError::shape(
                    format!("layer {li} ({})", layer.kind()),
                    "input matching layer definition",
                    format!("{:?}", s.dims(batch)),
                ))
            }
        };
        if retain && layer.is_block_output() {
            activations.push((li, TensorValue::new(next_shape.dims(batch), out.clone())?));
        }
        if let Some(c) = cache {
            caches.push(c);
        }
        cur = out;
        shape = next_shape;
    }
    let out = TensorValue::new(shape.dims(batch), cur)?;
    let tape = record.then_some(Tape {
        batch,
        caches,
        activations,
    });
    Ok((out, tape))
}
