//! Loss, optimizer and the early-stopping training loop.

mod adam;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use trainer::{train, EpochRecord, TrainConfig, TrainingLog};

use crate::autodiff::PROB_FLOOR;
use crate::error::{Error, Result};

/// `-ln(probs[label])` with the probability clamped to at least `1e-12`.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs
        .get(label)
        .ok_or_else(|| Error::Usage(format!("label {label} out of range for {} classes", probs.len())))?;
    Ok(-p.max(PROB_FLOOR).ln())
}
