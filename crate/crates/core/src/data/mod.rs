//! Accelerometer ingestion: resampling, user-based splits, windowing,
//! normalisation, noise injection and a synthetic stand-in corpus.

mod dataset;
mod io;
mod recording;
mod split;
mod synthetic;

pub use dataset::{
    add_gaussian_noise, prepare_datasets, score_batch, DatasetSplits, Normalizer, WindowedDataset, CHANNELS,
    SCORE_BATCH_SIZE,
};
pub use io::{load_manifest, read_user_csv, write_dataset, write_user_csv, DatasetManifest, ManifestUser, CSV_HEADER};
pub use recording::{
    resample_to_50hz, window, window_count, RawRecording, Window, TARGET_RATE_HZ, WINDOW_LEN, WINDOW_STRIDE,
};
pub use split::{split_by_users, split_sizes, Split, UserSplit};
pub use synthetic::{generate_synthetic, generate_synthetic_with, SyntheticConfig};
