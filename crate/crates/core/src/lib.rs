//! Training-free architecture search for accelerometer activity
//! recognition: sample CNN/LSTM architectures, score them with zero-cost
//! proxies from a single batch, optionally train them, and measure how well
//! the proxy rankings predict trained performance.

pub mod arch;
pub mod data;
pub mod error;
pub mod eval;
mod float_serde;
pub mod nn;
pub mod pipeline;
pub mod proxies;
pub mod stats;
pub mod store;
pub mod train;

pub use error::{Result, ZcpError};
