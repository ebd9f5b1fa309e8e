use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{resample_to_50hz, split_by_users, window, RawRecording, Split, UserSplit, WINDOW_LEN};
use crate::error::{Result, ZcpError};
use crate::nn::TensorValue;

pub const CHANNELS: usize = 3;
pub const SCORE_BATCH_SIZE: usize = 256;

/// Segmented windows of one split.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    /// `[N, 3, 100]`
    pub windows: TensorValue,
    pub labels: Vec<usize>,
    pub user_ids: Vec<String>,
    pub split: Split,
    pub class_names: Vec<String>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Inputs and labels for the given rows.
    pub fn batch(&self, indices: &[usize]) -> (TensorValue, Vec<usize>) {
        (
            self.windows.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Per-channel z-score statistics fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl Normalizer {
    pub fn fit(ds: &WindowedDataset) -> Self {
        let mut mean = [0.0; CHANNELS];
        let mut std = [1.0; CHANNELS];
        let n = ds.len();
        if n == 0 {
            return Self { mean, std };
        }
        for c in 0..CHANNELS {
            let vals = (0..n).flat_map(|i| &ds.windows.row(i)[c * WINDOW_LEN..(c + 1) * WINDOW_LEN]);
            let count = (n * WINDOW_LEN) as f64;
            let m = vals.clone().sum::<f64>() / count;
            let var = vals.map(|v| (v - m) * (v - m)).sum::<f64>() / count;
            mean[c] = m;
            std[c] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Self { mean, std }
    }

    pub fn apply(&self, ds: &mut WindowedDataset) {
        let row = CHANNELS * WINDOW_LEN;
        for (k, v) in ds.windows.data_mut().iter_mut().enumerate() {
            let c = (k % row) / WINDOW_LEN;
            *v = (*v - self.mean[c]) / self.std[c];
        }
    }
}

/// Normalised train/val/test datasets built from raw recordings.
#[derive(Clone, Debug)]
pub struct DatasetSplits {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
    pub users: UserSplit,
    pub normalizer: Normalizer,
}

/// Resample, split by user, window each recording and z-score every split
/// with training statistics.
pub fn prepare_datasets(recordings: &[RawRecording], class_names: &[String], seed: u64) -> Result<DatasetSplits> {
    let users = split_by_users(recordings, seed)?;
    let mut parts: [(Vec<f64>, Vec<usize>, Vec<String>); 3] = Default::default();
    for rec in recordings {
        if let Some(&bad) = rec.labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(ZcpError::LabelOutOfRange {
                label: bad,
                classes: class_names.len(),
            });
        }
        let rec50 = resample_to_50hz(rec)?;
        let idx = match users.split_of(&rec.user_id).expect("every user is assigned") {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        };
        for w in window(&rec50)? {
            parts[idx].0.extend_from_slice(&w.data);
            parts[idx].1.push(w.label);
            parts[idx].2.push(rec.user_id.clone());
        }
    }
    let [tr, va, te] = parts;
    let build = |(data, labels, user_ids): (Vec<f64>, Vec<usize>, Vec<String>), split| -> Result<WindowedDataset> {
        Ok(WindowedDataset {
            windows: TensorValue::new(vec![labels.len(), CHANNELS, WINDOW_LEN], data)?,
            labels,
            user_ids,
            split,
            class_names: class_names.to_vec(),
        })
    };
    let mut train = build(tr, Split::Train)?;
    let mut val = build(va, Split::Val)?;
    let mut test = build(te, Split::Test)?;
    let normalizer = Normalizer::fit(&train);
    normalizer.apply(&mut train);
    normalizer.apply(&mut val);
    normalizer.apply(&mut test);
    Ok(DatasetSplits {
        train,
        val,
        test,
        users,
        normalizer,
    })
}

/// Adds i.i.d. zero-mean Gaussian noise to a test split.
pub fn add_gaussian_noise(ds: &WindowedDataset, variance: f64, seed: u64) -> Result<WindowedDataset> {
    if ds.split != Split::Test {
        return Err(ZcpError::NoiseOnNonTestSplit(ds.split.as_str().into()));
    }
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(ZcpError::InvalidArgument(format!("noise variance {variance} must be >= 0")));
    }
    let mut out = ds.clone();
    if variance == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, variance.sqrt()).expect("valid std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.windows.data_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

/// The first `SCORE_BATCH_SIZE` rows of the training split under a seeded
/// shuffle (fewer if the split is smaller).
pub fn score_batch(train: &WindowedDataset, seed: u64) -> Result<(TensorValue, Vec<usize>)> {
    if train.split != Split::Train {
        return Err(ZcpError::InvalidArgument("score batch must come from the training split".into()));
    }
    if train.is_empty() {
        return Err(ZcpError::Empty("training split".into()));
    }
    let mut idx: Vec<usize> = (0..train.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(SCORE_BATCH_SIZE);
    Ok(train.batch(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(split: Split, n: usize) -> WindowedDataset {
        let data: Vec<f64> = (0..n * 300).map(|i| (i % 17) as f64 * 0.1).collect();
        WindowedDataset {
            windows: TensorValue::new(vec![n, 3, 100], data).unwrap(),
            labels: vec![0; n],
            user_ids: vec!["u".into(); n],
            split,
            class_names: vec!["a".into(), "b".into()],
        }
    }

    #[test]
    fn zero_variance_noise_is_identity() {
        let ds = toy(Split::Test, 4);
        let out = add_gaussian_noise(&ds, 0.0, 9).unwrap();
        assert_eq!(out, ds);
    }

    #[test]
    fn noise_rejected_on_train_and_negative_variance() {
        assert!(matches!(
            add_gaussian_noise(&toy(Split::Train, 2), 0.1, 1),
            Err(ZcpError::NoiseOnNonTestSplit(_))
        ));
        assert!(add_gaussian_noise(&toy(Split::Test, 2), -0.1, 1).is_err());
    }

    #[test]
    fn noise_variance_is_as_requested() {
        let ds = toy(Split::Test, 3334);
        let out = add_gaussian_noise(&ds, 0.5, 2).unwrap();
        let diffs: Vec<f64> = out.windows.data().iter().zip(ds.windows.data()).map(|(a, b)| a - b).collect();
        let n = diffs.len() as f64;
        assert!(n >= 1e6);
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.5).abs() / 0.5 < 0.05, "variance {var}");
    }

    #[test]
    fn normalizer_centres_training_split() {
        let mut ds = toy(Split::Train, 5);
        let norm = Normalizer::fit(&ds);
        norm.apply(&mut ds);
        let refit = Normalizer::fit(&ds);
        for c in 0..3 {
            assert!(refit.mean[c].abs() < 1e-12);
            assert!((refit.std[c] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn score_batch_caps_at_256_and_repeats() {
        let ds = toy(Split::Train, 300);
        let (x, y) = score_batch(&ds, 5).unwrap();
        assert_eq!(x.shape(), &[256, 3, 100]);
        assert_eq!(y.len(), 256);
        assert_eq!(score_batch(&ds, 5).unwrap().0, x);
        assert!(score_batch(&toy(Split::Val, 3), 5).is_err());
    }
}
