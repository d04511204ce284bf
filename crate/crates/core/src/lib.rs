//! Severe-weather sequence classification from radar reflectivity statistics.
//!
//! The pipeline turns 3D reflectivity volumes into per-step summary
//! statistics, smooths each channel with a scalar Kalman filter, and
//! classifies the resulting sequences (tornado, hail, wind) with a
//! convolutional BiLSTM followed by multi-head self-attention. Recurrent
//! and nearest-neighbour baselines share the same data path.

pub mod autodiff;
pub mod error;
pub mod features;
pub mod io;
pub mod kalman;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod train;

pub use error::{Error, ErrorKind, Result};

/// Number of event classes: 0 = tornado, 1 = hail, 2 = wind.
pub const NUM_CLASSES: usize = 3;
