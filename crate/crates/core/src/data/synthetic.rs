use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::RawRecording;
use crate::error::{Result, ZcpError};

/// Parameters of the desk-scale synthetic accelerometer corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub users: usize,
    /// Recording length per user; split evenly across all classes.
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    /// Standard deviation of additive Gaussian jitter.
    pub jitter_std: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 6,
            users: 10,
            duration_s: 120.0,
            sample_rate_hz: 50.0,
            jitter_std: 0.1,
        }
    }
}

impl SyntheticConfig {
    pub fn class_names(&self) -> Vec<String> {
        (0..self.classes).map(|c| format!("activity_{c}")).collect()
    }

    /// Dominant frequency of class `c` in Hz.
    pub fn class_frequency(&self, c: usize) -> f64 {
        let nyquist_room = 0.8 * self.sample_rate_hz / 2.0 - 1.0;
        let spacing = (nyquist_room / self.classes as f64).min(1.5);
        1.0 + spacing * c as f64
    }
}

struct ClassProfile {
    freq: f64,
    offset: [f64; 3],
    amplitude: [f64; 3],
    phase: [f64; 3],
}

/// Synthetic recordings with the default jitter and 50 Hz sampling.
pub fn generate_synthetic(k_classes: usize, n_users: usize, duration_s: f64, seed: u64) -> Result<Vec<RawRecording>> {
    generate_synthetic_with(
        &SyntheticConfig {
            classes: k_classes,
            users: n_users,
            duration_s,
            ..Default::default()
        },
        seed,
    )
}

/// Each class is a three-axis sinusoid at a class-specific frequency (plus
/// its second harmonic) around a class-specific gravity offset. Users
/// scale the amplitude and visit the classes in their own order, one
/// contiguous segment per class.
pub fn generate_synthetic_with(cfg: &SyntheticConfig, seed: u64) -> Result<Vec<RawRecording>> {
    if cfg.classes < 2 {
        return Err(ZcpError::InvalidArgument(format!("need at least 2 classes, got {}", cfg.classes)));
    }
    if !(cfg.sample_rate_hz > 0.0) || !(cfg.duration_s > 0.0) || cfg.jitter_std < 0.0 {
        return Err(ZcpError::InvalidArgument("synthetic rate/duration must be positive, jitter >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profiles: Vec<ClassProfile> = (0..cfg.classes)
        .map(|c| ClassProfile {
            freq: cfg.class_frequency(c),
            offset: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            amplitude: [rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0)],
            phase: [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)],
        })
        .collect();
    let total = (cfg.duration_s * cfg.sample_rate_hz).round() as usize;
    let per_class = total / cfg.classes;
    let dt = 1.0 / cfg.sample_rate_hz;
    let mut out = Vec::with_capacity(cfg.users);
    for u in 0..cfg.users {
        let scale = (1.0 + 0.1 * rng.sample::<f64, _>(StandardNormal)).max(0.5);
        let mut order: Vec<usize> = (0..cfg.classes).collect();
        order.shuffle(&mut rng);
        let mut samples = Vec::with_capacity(per_class * cfg.classes);
        let mut labels = Vec::with_capacity(per_class * cfg.classes);
        for &c in &order {
            let p = &profiles[c];
            let shift = rng.gen_range(0.0..TAU);
            for i in 0..per_class {
                let t = i as f64 * dt;
                let mut s = [0.0; 3];
                for (ch, v) in s.iter_mut().enumerate() {
                    let w = TAU * p.freq * t + p.phase[ch] + shift;
                    let jitter = if cfg.jitter_std > 0.0 {
                        cfg.jitter_std * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    *v = p.offset[ch] + scale * p.amplitude[ch] * (w.sin() + 0.3 * (2.0 * w).sin()) + jitter;
                }
                samples.push(s);
                labels.push(c);
            }
        }
        out.push(RawRecording {
            user_id: format!("user{u:02}"),
            sample_rate_hz: cfg.sample_rate_hz,
            samples,
            labels,
        });
    }
    Ok(out)
}
