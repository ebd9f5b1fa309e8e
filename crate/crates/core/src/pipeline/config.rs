use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::SearchSpaceConfig;
use crate::data::{SyntheticConfig, CHANNELS, WINDOW_LEN};
use crate::error::{Result, ZcpError};
use crate::eval::{EvalSettings, NOISE_VARIANCES};
use crate::proxies::ProxyName;
use crate::train::TrainConfig;

/// Where recordings come from: a dataset manifest or the synthetic
/// generator. Exactly one must be set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
}

/// Training hyperparameters; the per-architecture seed comes from
/// [`Seeds::train`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub lr_decay: f64,
    pub decay_every: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            lr: d.lr,
            batch_size: d.batch_size,
            lr_decay: d.lr_decay,
            decay_every: d.decay_every,
        }
    }
}

impl TrainSettings {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            lr_decay: self.lr_decay,
            decay_every: self.decay_every,
            seed,
        }
    }
}

/// One named seed per source of randomness. All are required.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Architecture sampling.
    pub sampler: u64,
    /// Weight initialisation, combined with each spec hash.
    pub init: u64,
    /// User split.
    pub data: u64,
    /// Choice of the proxy scoring batch.
    pub score_batch: u64,
    /// Minibatch order and dropout, combined with each spec hash.
    pub train: u64,
    /// Test-set noise injection.
    pub noise: u64,
    pub random_search: u64,
    /// Synthetic corpus generation; required with `[data.synthetic]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub pct: f64,
    pub top_k: usize,
    pub random_search_ks: Vec<usize>,
    pub random_search_trials: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        let d = EvalSettings::default();
        Self {
            pct: d.pct,
            top_k: d.top_k,
            random_search_ks: d.random_search_ks,
            random_search_trials: d.random_search_trials,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub variances: Vec<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            variances: NOISE_VARIANCES.to_vec(),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("experiments")
}

fn default_proxies() -> Vec<ProxyName> {
    ProxyName::ALL.to_vec()
}

/// Complete description of one experiment, read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    /// Root holding `<experiment_id>/`. Relative paths resolve against the
    /// config file's directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; defaults to the available cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    pub data: DataConfig,
    #[serde(default)]
    pub search_space: SearchSpaceConfig,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default = "default_proxies")]
    pub proxies: Vec<ProxyName>,
    pub seeds: Seeds,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| ZcpError::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ZcpError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            ZcpError::Config(m) => ZcpError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| ZcpError::Config(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
        if let Some(m) = &mut self.data.manifest {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
    }

    /// Per-architecture proxies to compute: the configured ones, plus the
    /// ensemble's components when the ensemble is requested. Configured
    /// order first.
    pub fn component_proxies(&self) -> Vec<ProxyName> {
        let mut out: Vec<ProxyName> = self.proxies.iter().copied().filter(|&p| p != ProxyName::Ensemble).collect();
        if self.wants_ensemble() {
            for p in ProxyName::COMPONENTS {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        out
    }

    pub fn wants_ensemble(&self) -> bool {
        self.proxies.contains(&ProxyName::Ensemble)
    }

    /// Every proxy column of the experiment in output order.
    pub fn all_proxies(&self) -> Vec<ProxyName> {
        let mut out = self.component_proxies();
        if self.wants_ensemble() {
            out.push(ProxyName::Ensemble);
        }
        out
    }

    pub fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            pct: self.evaluate.pct,
            top_k: self.evaluate.top_k,
            random_search_trials: self.evaluate.random_search_trials,
            random_search_seed: self.seeds.random_search,
            random_search_ks: self.evaluate.random_search_ks.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ZcpError::Config(m));
        match (&self.data.manifest, &self.data.synthetic) {
            (Some(m), None) => {
                if !m.is_file() {
                    return bad(format!("dataset manifest {} does not exist", m.display()));
                }
            }
            (None, Some(s)) => {
                if self.seeds.synthetic.is_none() {
                    return bad("[data.synthetic] requires seeds.synthetic".into());
                }
                if s.classes != self.search_space.num_classes {
                    return bad(format!(
                        "synthetic data has {} classes but search_space.num_classes = {}",
                        s.classes, self.search_space.num_classes
                    ));
                }
            }
            _ => return bad("set exactly one of data.manifest and [data.synthetic]".into()),
        }
        self.search_space.validate()?;
        if self.search_space.input_channels != CHANNELS || self.search_space.seq_len != WINDOW_LEN {
            return bad(format!(
                "search_space input must be {CHANNELS} channels x {WINDOW_LEN} samples to match the windowed data"
            ));
        }
        self.train.with_seed(0).validate()?;
        if self.proxies.is_empty() {
            return bad("proxies must not be empty".into());
        }
        let mut seen = HashSet::new();
        if let Some(p) = self.proxies.iter().find(|p| !seen.insert(**p)) {
            return bad(format!("proxy {p} listed twice"));
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        if let Some(v) = self.noise.variances.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return bad(format!("noise variance {v} must be finite and >= 0"));
        }
        let e = &self.evaluate;
        if !(e.pct > 0.0 && e.pct <= 100.0) || e.top_k == 0 || e.random_search_trials == 0 {
            return bad("evaluate: pct in (0, 100], top_k and random_search_trials >= 1".into());
        }
        Ok(())
    }
}
