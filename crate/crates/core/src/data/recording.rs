use log::warn;

use crate::error::{Result, ZcpError};

pub const TARGET_RATE_HZ: f64 = 50.0;
/// 2 s at 50 Hz.
pub const WINDOW_LEN: usize = 100;
/// 50 % overlap.
pub const WINDOW_STRIDE: usize = 50;

/// One user's accelerometer stream with per-sample activity labels.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecording {
    pub user_id: String,
    pub sample_rate_hz: f64,
    /// `(ax, ay, az)` in gravity units.
    pub samples: Vec<[f64; 3]>,
    pub labels: Vec<usize>,
}

impl RawRecording {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) {
            return Err(ZcpError::InvalidArgument(format!(
                "user {}: sample rate must be positive",
                self.user_id
            )));
        }
        if self.samples.len() != self.labels.len() {
            return Err(ZcpError::InvalidArgument(format!(
                "user {}: {} samples but {} labels",
                self.user_id,
                self.samples.len(),
                self.labels.len()
            )));
        }
        Ok(())
    }
}

/// A `3 x 100` channel-major segment and its label.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub data: Vec<f64>,
    pub label: usize,
}

/// Linear-interpolation downsampling onto a 50 Hz grid. Labels come from
/// the nearest original sample. Rates at or below 50 Hz pass through.
pub fn resample_to_50hz(rec: &RawRecording) -> Result<RawRecording> {
    rec.validate()?;
    if rec.samples.is_empty() {
        return Err(ZcpError::Empty(format!("recording for user {}", rec.user_id)));
    }
    if rec.sample_rate_hz <= TARGET_RATE_HZ {
        if rec.sample_rate_hz < TARGET_RATE_HZ {
            warn!(
                "user {} recorded at {} Hz (< 50 Hz); left unchanged",
                rec.user_id, rec.sample_rate_hz
            );
        }
        return Ok(rec.clone());
    }
    let ratio = rec.sample_rate_hz / TARGET_RATE_HZ;
    let n = rec.samples.len();
    let n_out = ((n - 1) as f64 / ratio).floor() as usize + 1;
    let mut samples = Vec::with_capacity(n_out);
    let mut labels = Vec::with_capacity(n_out);
    for j in 0..n_out {
        let pos = j as f64 * ratio;
        let lo = (pos.floor() as usize).min(n - 1);
        let hi = (lo + 1).min(n - 1);
        let frac = pos - lo as f64;
        let (a, b) = (rec.samples[lo], rec.samples[hi]);
        let s = if frac == 0.0 {
            a
        } else {
            [
                a[0] + (b[0] - a[0]) * frac,
                a[1] + (b[1] - a[1]) * frac,
                a[2] + (b[2] - a[2]) * frac,
            ]
        };
        samples.push(s);
        labels.push(rec.labels[(pos.round() as usize).min(n - 1)]);
    }
    Ok(RawRecording {
        user_id: rec.user_id.clone(),
        sample_rate_hz: TARGET_RATE_HZ,
        samples,
        labels,
    })
}

/// Number of full windows in a stream of `len` samples.
pub fn window_count(len: usize) -> usize {
    if len < WINDOW_LEN {
        0
    } else {
        (len - WINDOW_LEN) / WINDOW_STRIDE + 1
    }
}

/// Sliding 100-sample windows with stride 50; the trailing partial window
/// is dropped. Each window takes the majority label, smallest id on ties.
pub fn window(rec: &RawRecording) -> Result<Vec<Window>> {
    rec.validate()?;
    if rec.samples.len() < WINDOW_LEN {
        return Err(ZcpError::InvalidArgument(format!(
            "user {}: {} samples is shorter than one window",
            rec.user_id,
            rec.samples.len()
        )));
    }
    let n_classes = rec.labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; n_classes];
    let mut out = Vec::with_capacity(window_count(rec.samples.len()));
    for w in 0..window_count(rec.samples.len()) {
        let start = w * WINDOW_STRIDE;
        let mut data = vec![0.0; 3 * WINDOW_LEN];
        counts.fill(0);
        for t in 0..WINDOW_LEN {
            let s = rec.samples[start + t];
            for c in 0..3 {
                data[c * WINDOW_LEN + t] = s[c];
            }
            counts[rec.labels[start + t]] += 1;
        }
        let label = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        out.push(Window { data, label });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(rate: f64, values: Vec<f64>, labels: Vec<usize>) -> RawRecording {
        RawRecording {
            user_id: "u".into(),
            sample_rate_hz: rate,
            samples: values.iter().map(|&v| [v, -v, 1.0]).collect(),
            labels,
        }
    }

    #[test]
    fn constant_signal_halves_in_length() {
        let r = rec(100.0, vec![0.7; 200], vec![0; 200]);
        let out = resample_to_50hz(&r).unwrap();
        assert_eq!(out.samples.len(), 100);
        assert!(out.samples.iter().all(|s| s[0] == 0.7 && s[1] == -0.7));
    }

    #[test]
    fn ramp_keeps_every_second_value() {
        let r = rec(100.0, (0..200).map(|v| v as f64).collect(), vec![0; 200]);
        let out = resample_to_50hz(&r).unwrap();
        let xs: Vec<f64> = out.samples.iter().map(|s| s[0]).collect();
        let expected: Vec<f64> = (0..100).map(|v| 2.0 * v as f64).collect();
        assert_eq!(xs, expected);
    }

    #[test]
    fn non_integer_ratio_interpolates_linearly() {
        // 75 Hz ramp: output sample j sits at original index 1.5 j.
        let r = rec(75.0, (0..31).map(|v| v as f64).collect(), vec![0; 31]);
        let out = resample_to_50hz(&r).unwrap();
        assert_eq!(out.samples.len(), 21);
        for (j, s) in out.samples.iter().enumerate() {
            assert!((s[0] - 1.5 * j as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn fifty_hz_passes_through() {
        let r = rec(50.0, vec![1.0, 2.0, 3.0], vec![0, 1, 1]);
        assert_eq!(resample_to_50hz(&r).unwrap(), r);
    }

    #[test]
    fn empty_recording_is_an_error() {
        let r = rec(100.0, vec![], vec![]);
        assert!(resample_to_50hz(&r).is_err());
    }

    #[test]
    fn window_counts() {
        let r = rec(50.0, vec![0.0; 500], vec![0; 500]);
        assert_eq!(window(&r).unwrap().len(), 9);
        let r = rec(50.0, vec![0.0; 100], vec![0; 100]);
        assert_eq!(window(&r).unwrap().len(), 1);
        let r = rec(50.0, vec![0.0; 99], vec![0; 99]);
        assert!(window(&r).is_err());
    }

    #[test]
    fn majority_label() {
        let mut labels = vec![0; 60];
        labels.extend(vec![1; 40]);
        let r = rec(50.0, vec![0.0; 100], labels);
        assert_eq!(window(&r).unwrap()[0].label, 0);
        let mut labels = vec![2; 40];
        labels.extend(vec![1; 60]);
        let r = rec(50.0, vec![0.0; 100], labels);
        assert_eq!(window(&r).unwrap()[0].label, 1);
    }

    #[test]
    fn window_layout_is_channel_major() {
        let r = rec(50.0, (0..100).map(|v| v as f64).collect(), vec![0; 100]);
        let w = &window(&r).unwrap()[0];
        assert_eq!(w.data[5], 5.0);
        assert_eq!(w.data[100 + 5], -5.0);
        assert_eq!(w.data[200 + 5], 1.0);
    }
}
