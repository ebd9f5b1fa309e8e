//! The CNN/LSTM search space: sampling, counting, canonical records and
//! model instantiation.

use std::collections::HashSet;

use num_bigint::BigUint;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ZcpError};
use crate::nn::{xavier_normal_init, Model, ModelBuilder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Cnn,
    Lstm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnLayerSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub dropout: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmLayerSpec {
    pub hidden: usize,
    pub dropout: f64,
}

/// Description of one sampled architecture. Field order is the canonical
/// serialisation order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub kind: ArchKind,
    pub input_channels: usize,
    pub num_classes: usize,
    pub cnn_layers: Vec<CnnLayerSpec>,
    pub lstm_layers: Vec<LstmLayerSpec>,
}

impl ArchSpec {
    pub fn cnn(num_classes: usize, layers: Vec<CnnLayerSpec>) -> Self {
        Self {
            kind: ArchKind::Cnn,
            input_channels: 3,
            num_classes,
            cnn_layers: layers,
            lstm_layers: Vec::new(),
        }
    }

    pub fn lstm(num_classes: usize, layers: Vec<LstmLayerSpec>) -> Self {
        Self {
            kind: ArchKind::Lstm,
            input_channels: 3,
            num_classes,
            cnn_layers: Vec::new(),
            lstm_layers: layers,
        }
    }

    pub fn depth(&self) -> usize {
        match self.kind {
            ArchKind::Cnn => self.cnn_layers.len(),
            ArchKind::Lstm => self.lstm_layers.len(),
        }
    }

    /// Single-line canonical record.
    pub fn to_canonical(&self) -> String {
        serde_json::to_string(self).expect("ArchSpec serialises")
    }

    pub fn from_canonical(text: &str) -> Result<Self> {
        let spec: ArchSpec = serde_json::from_str(text).map_err(|e| ZcpError::Parse {
            context: format!("arch record line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        spec.validate_structure()?;
        Ok(spec)
    }

    /// Lowercase hex SHA-256 of the canonical record.
    pub fn spec_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical().as_bytes()))
    }

    /// Checks invariants that hold for every space, regardless of ranges.
    pub fn validate_structure(&self) -> Result<()> {
        let bad = |m: String| Err(ZcpError::InvalidArch(m));
        if self.input_channels == 0 || self.num_classes < 2 {
            return bad(format!(
                "need input_channels > 0 and num_classes >= 2, got {} / {}",
                self.input_channels, self.num_classes
            ));
        }
        let valid_p = |p: f64| (0.0..1.0).contains(&p);
        match self.kind {
            ArchKind::Cnn => {
                if self.cnn_layers.is_empty() || !self.lstm_layers.is_empty() {
                    return bad("cnn spec needs cnn layers and no lstm layers".into());
                }
                for (i, l) in self.cnn_layers.iter().enumerate() {
                    if l.out_channels == 0 || l.kernel == 0 || !valid_p(l.dropout) {
                        return bad(format!("cnn layer {i} invalid: {l:?}"));
                    }
                }
            }
            ArchKind::Lstm => {
                if self.lstm_layers.is_empty() || !self.cnn_layers.is_empty() {
                    return bad("lstm spec needs lstm layers and no cnn layers".into());
                }
                for (i, l) in self.lstm_layers.iter().enumerate() {
                    if l.hidden == 0 || !valid_p(l.dropout) {
                        return bad(format!("lstm layer {i} invalid: {l:?}"));
                    }
                }
                let last = self.lstm_layers.last().expect("non-empty");
                if last.dropout != 0.0 {
                    return bad(format!("last lstm layer dropout must be 0.0, got {}", last.dropout));
                }
            }
        }
        Ok(())
    }

    /// Checks that every choice lies in the ranges of `space`.
    pub fn validate_in(&self, space: &SearchSpaceConfig) -> Result<()> {
        self.validate_structure()?;
        let bad = |m: String| Err(ZcpError::InvalidArch(m));
        if self.input_channels != space.input_channels {
            return bad(format!("input_channels {} != {}", self.input_channels, space.input_channels));
        }
        let dropout_ok = |p: f64| space.dropout_grid.iter().any(|&g| (g - p).abs() < 1e-9);
        match self.kind {
            ArchKind::Cnn => {
                if !space.cnn_depth.contains(self.cnn_layers.len()) {
                    return bad(format!("cnn depth {} outside {:?}", self.cnn_layers.len(), space.cnn_depth));
                }
                for (i, l) in self.cnn_layers.iter().enumerate() {
                    if !space.cnn_channels.contains(l.out_channels)
                        || !space.cnn_kernel.contains(l.kernel)
                        || !dropout_ok(l.dropout)
                    {
                        return bad(format!("cnn layer {i} outside search space: {l:?}"));
                    }
                }
            }
            ArchKind::Lstm => {
                if !space.lstm_depth.contains(self.lstm_layers.len()) {
                    return bad(format!("lstm depth {} outside {:?}", self.lstm_layers.len(), space.lstm_depth));
                }
                let n = self.lstm_layers.len();
                for (i, l) in self.lstm_layers.iter().enumerate() {
                    let drop_ok = if i + 1 == n { l.dropout == 0.0 } else { dropout_ok(l.dropout) };
                    if !space.lstm_hidden.contains(l.hidden) || !drop_ok {
                        return bad(format!("lstm layer {i} outside search space: {l:?}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Inclusive arithmetic range `min, min + step, ..., <= max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub min: usize,
    pub max: usize,
    #[serde(default = "one")]
    pub step: usize,
}

fn one() -> usize {
    1
}

impl IntRange {
    pub const fn new(min: usize, max: usize, step: usize) -> Self {
        Self { min, max, step }
    }

    pub fn count(&self) -> usize {
        if self.step == 0 || self.max < self.min {
            0
        } else {
            (self.max - self.min) / self.step + 1
        }
    }

    pub fn contains(&self, v: usize) -> bool {
        v >= self.min && v <= self.max && (v - self.min) % self.step.max(1) == 0
    }

    pub fn nth(&self, i: usize) -> usize {
        self.min + i * self.step
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        self.nth(rng.gen_range(0..self.count()))
    }
}

/// Ranges of the architecture search space plus sampling settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpaceConfig {
    pub cnn_depth: IntRange,
    pub cnn_channels: IntRange,
    pub cnn_kernel: IntRange,
    pub lstm_depth: IntRange,
    pub lstm_hidden: IntRange,
    pub dropout_grid: Vec<f64>,
    /// CNN:LSTM sampling ratio as `[cnn, lstm]`.
    pub cnn_to_rnn_ratio: [u32; 2],
    pub sample_count: usize,
    pub input_channels: usize,
    pub num_classes: usize,
    pub seq_len: usize,
}

impl Default for SearchSpaceConfig {
    fn default() -> Self {
        Self {
            cnn_depth: IntRange::new(1, 7, 1),
            cnn_channels: IntRange::new(8, 1024, 8),
            cnn_kernel: IntRange::new(2, 9, 1),
            lstm_depth: IntRange::new(2, 4, 1),
            lstm_hidden: IntRange::new(8, 504, 8),
            dropout_grid: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            cnn_to_rnn_ratio: [3, 1],
            sample_count: 1500,
            input_channels: 3,
            num_classes: 6,
            seq_len: 100,
        }
    }
}

impl SearchSpaceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ZcpError::Config(format!("search space: {m}")));
        let [a, b] = self.cnn_to_rnn_ratio;
        if a + b == 0 {
            return bad("ratio must be positive");
        }
        if a > 0 && (self.cnn_depth.count() == 0 || self.cnn_channels.count() == 0 || self.cnn_kernel.count() == 0 || self.cnn_depth.min == 0) {
            return bad("empty cnn range");
        }
        if b > 0 && (self.lstm_depth.count() == 0 || self.lstm_hidden.count() == 0 || self.lstm_depth.min == 0) {
            return bad("empty lstm range");
        }
        if self.dropout_grid.is_empty() || self.dropout_grid.iter().any(|p| !(0.0..1.0).contains(p)) {
            return bad("dropout grid must be non-empty within [0, 1)");
        }
        if self.num_classes < 2 || self.input_channels == 0 {
            return bad("need >= 2 classes and >= 1 input channel");
        }
        if a > 0 && self.cnn_depth.max * (self.cnn_kernel.max - 1) >= self.seq_len {
            return bad("deepest cnn with largest kernel leaves no output steps");
        }
        Ok(())
    }

    /// Number of CNN specs among `sample_count` draws.
    pub fn cnn_count(&self) -> usize {
        let [a, b] = self.cnn_to_rnn_ratio;
        let share = self.sample_count as f64 * a as f64 / (a + b) as f64;
        share.round() as usize
    }
}

/// Exact cardinalities of the CNN and LSTM halves of the space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpaceSize {
    pub cnn_total: BigUint,
    pub lstm_total: BigUint,
}

pub fn count_search_space(config: &SearchSpaceConfig) -> SpaceSize {
    let dropouts = config.dropout_grid.len() as u64;
    let cnn_per_layer = BigUint::from(config.cnn_channels.count() as u64 * config.cnn_kernel.count() as u64 * dropouts);
    let mut cnn_total = BigUint::from(0u32);
    for depth in (0..config.cnn_depth.count()).map(|i| config.cnn_depth.nth(i)) {
        cnn_total += cnn_per_layer.pow(depth as u32);
    }
    let hidden = BigUint::from(config.lstm_hidden.count() as u64);
    let inner = &hidden * BigUint::from(dropouts);
    let mut lstm_total = BigUint::from(0u32);
    for depth in (0..config.lstm_depth.count()).map(|i| config.lstm_depth.nth(i)) {
        if depth == 0 {
            continue;
        }
        lstm_total += inner.pow(depth as u32 - 1) * &hidden;
    }
    SpaceSize { cnn_total, lstm_total }
}

fn round_dropout(p: f64) -> f64 {
    (p * 1e6).round() / 1e6
}

fn sample_cnn<R: Rng>(config: &SearchSpaceConfig, rng: &mut R) -> ArchSpec {
    let depth = config.cnn_depth.sample(rng);
    let layers = (0..depth)
        .map(|_| CnnLayerSpec {
            out_channels: config.cnn_channels.sample(rng),
            kernel: config.cnn_kernel.sample(rng),
            dropout: round_dropout(config.dropout_grid[rng.gen_range(0..config.dropout_grid.len())]),
        })
        .collect();
    ArchSpec {
        input_channels: config.input_channels,
        ..ArchSpec::cnn(config.num_classes, layers)
    }
}

fn sample_lstm<R: Rng>(config: &SearchSpaceConfig, rng: &mut R) -> ArchSpec {
    let depth = config.lstm_depth.sample(rng);
    let layers = (0..depth)
        .map(|i| {
            let hidden = config.lstm_hidden.sample(rng);
            let dropout = if i + 1 == depth {
                0.0
            } else {
                round_dropout(config.dropout_grid[rng.gen_range(0..config.dropout_grid.len())])
            };
            LstmLayerSpec { hidden, dropout }
        })
        .collect();
    ArchSpec {
        input_channels: config.input_channels,
        ..ArchSpec::lstm(config.num_classes, layers)
    }
}

/// Draws `sample_count` specs: the CNN share first, then the LSTM share.
/// Depth and every per-layer choice are uniform and independent; duplicates
/// may occur.
pub fn sample_architectures(config: &SearchSpaceConfig, seed: u64) -> Vec<ArchSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cnn = config.cnn_count();
    let mut out = Vec::with_capacity(config.sample_count);
    out.extend((0..n_cnn).map(|_| sample_cnn(config, &mut rng)));
    out.extend((n_cnn..config.sample_count).map(|_| sample_lstm(config, &mut rng)));
    out
}

/// Like [`sample_architectures`] but redraws duplicates so every spec hash
/// is distinct. Fails when a half of the space is too small to supply its
/// share.
pub fn sample_distinct_architectures(config: &SearchSpaceConfig, seed: u64) -> Result<Vec<ArchSpec>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cnn = config.cnn_count();
    let size = count_search_space(config);
    let n_lstm = config.sample_count - n_cnn;
    if BigUint::from(n_cnn) > size.cnn_total || BigUint::from(n_lstm) > size.lstm_total {
        return Err(ZcpError::Config(format!(
            "search space too small for {n_cnn} distinct cnn and {n_lstm} distinct lstm specs"
        )));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(config.sample_count);
    for i in 0..config.sample_count {
        let mut attempts = 0usize;
        loop {
            let spec = if i < n_cnn {
                sample_cnn(config, &mut rng)
            } else {
                sample_lstm(config, &mut rng)
            };
            if seen.insert(spec.spec_hash()) {
                out.push(spec);
                break;
            }
            attempts += 1;
            if attempts > 100_000 {
                return Err(ZcpError::Config("could not draw a distinct spec after 100000 attempts".into()));
            }
        }
    }
    Ok(out)
}

/// Builds the network described by `spec` and initialises it with Xavier
/// normal weights.
///
/// CNNs are `(conv1d -> relu -> dropout)` blocks followed by global average
/// pooling and a linear head; LSTMs are stacked layers whose final time step
/// feeds a linear head.
pub fn instantiate(spec: &ArchSpec, num_classes: usize, seq_len: usize, seed: u64) -> Result<Model> {
    spec.validate_structure()?;
    if spec.num_classes != num_classes {
        return Err(ZcpError::InvalidArch(format!(
            "spec declares {} classes, dataset has {num_classes}",
            spec.num_classes
        )));
    }
    let mut b = ModelBuilder::new(spec.input_channels, seq_len);
    match spec.kind {
        ArchKind::Cnn => {
            for l in &spec.cnn_layers {
                b = b.conv1d(l.out_channels, l.kernel)?.relu().dropout(l.dropout)?;
            }
            b = b.global_avg_pool()?;
        }
        ArchKind::Lstm => {
            for l in &spec.lstm_layers {
                b = b.lstm(l.hidden)?;
                if l.dropout > 0.0 {
                    b = b.dropout(l.dropout)?;
                }
            }
            b = b.last_step()?;
        }
    }
    let mut model = b.linear(num_classes)?.build()?;
    xavier_normal_init(model.params_mut(), seed);
    model.seed_dropout(seed ^ 0x9E37_79B9_7F4A_7C15);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;

    #[test]
    fn default_split_is_three_to_one() {
        let specs = sample_architectures(&SearchSpaceConfig::default(), 11);
        assert_eq!(specs.len(), 1500);
        assert_eq!(specs.iter().filter(|s| s.kind == ArchKind::Cnn).count(), 1125);
        assert_eq!(specs.iter().filter(|s| s.kind == ArchKind::Lstm).count(), 375);
    }

    #[test]
    fn singleton_space_yields_identical_cnns() {
        let cfg = SearchSpaceConfig {
            cnn_depth: IntRange::new(1, 1, 1),
            cnn_channels: IntRange::new(8, 8, 8),
            cnn_kernel: IntRange::new(2, 2, 1),
            dropout_grid: vec![0.1],
            cnn_to_rnn_ratio: [1, 0],
            sample_count: 50,
            ..Default::default()
        };
        let specs = sample_architectures(&cfg, 3);
        assert!(specs.iter().all(|s| s == &specs[0]));
        assert_eq!(count_search_space(&cfg).cnn_total, BigUint::from(1u32));
    }

    #[test]
    fn lstm_total_matches_table() {
        let size = count_search_space(&SearchSpaceConfig::default());
        assert_eq!(size.lstm_total, BigUint::from(1_975_391_145u64));
    }

    #[test]
    fn single_layer_cnn_head_width() {
        let spec = ArchSpec::cnn(
            6,
            vec![CnnLayerSpec {
                out_channels: 32,
                kernel: 3,
                dropout: 0.4,
            }],
        );
        let model = instantiate(&spec, 6, 100, 1).unwrap();
        let convs = model.layers().iter().filter(|l| matches!(l, Layer::Conv1d { .. })).count();
        assert_eq!(convs, 1);
        match model.layers().last().unwrap() {
            Layer::Linear { d_in, d_out, .. } => assert_eq!((*d_in, *d_out), (32, 6)),
            other => panic!("unexpected head {other:?}"),
        }
    }

    #[test]
    fn deepest_widest_kernel_is_buildable() {
        let layers = vec![
            CnnLayerSpec {
                out_channels: 8,
                kernel: 9,
                dropout: 0.1
            };
            7
        ];
        let spec = ArchSpec::cnn(6, layers);
        let model = instantiate(&spec, 6, 100, 0).unwrap();
        let x = crate::nn::TensorValue::zeros(&[1, 3, 100]);
        assert_eq!(model.infer(&x).unwrap().shape(), &[1, 6]);
        // 100 - 7 * 8 = 44 steps reach the pool.
        assert_eq!(100 - 7 * (9 - 1), 44);
    }

    #[test]
    fn missing_kind_is_a_parse_error() {
        let text = r#"{"input_channels":3,"num_classes":6,"cnn_layers":[],"lstm_layers":[]}"#;
        let err = ArchSpec::from_canonical(text).unwrap_err();
        assert!(matches!(err, ZcpError::Parse { .. }));
        assert!(err.to_string().contains("kind"));
    }

    #[test]
    fn nonzero_final_lstm_dropout_rejected() {
        let spec = ArchSpec::lstm(
            6,
            vec![
                LstmLayerSpec { hidden: 8, dropout: 0.1 },
                LstmLayerSpec { hidden: 8, dropout: 0.2 },
            ],
        );
        assert!(spec.validate_structure().is_err());
    }

    #[test]
    fn class_mismatch_rejected() {
        let spec = ArchSpec::lstm(6, vec![LstmLayerSpec { hidden: 8, dropout: 0.0 }]);
        assert!(instantiate(&spec, 5, 100, 0).is_err());
    }

    #[test]
    fn distinct_sampler_has_unique_hashes() {
        let cfg = SearchSpaceConfig {
            cnn_depth: IntRange::new(1, 1, 1),
            cnn_channels: IntRange::new(8, 24, 8),
            cnn_kernel: IntRange::new(2, 3, 1),
            lstm_depth: IntRange::new(2, 2, 1),
            lstm_hidden: IntRange::new(8, 16, 8),
            dropout_grid: vec![0.1],
            sample_count: 6,
            ..Default::default()
        };
        let specs = sample_distinct_architectures(&cfg, 1).unwrap();
        let hashes: HashSet<_> = specs.iter().map(|s| s.spec_hash()).collect();
        assert_eq!(hashes.len(), 6);
        let too_many = SearchSpaceConfig { sample_count: 40, ..cfg };
        assert!(sample_distinct_architectures(&too_many, 1).is_err());
    }
}
