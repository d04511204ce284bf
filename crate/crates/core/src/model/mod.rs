//! The Conv-BiLSTM-attention classifier, its recurrent baselines and KNN.

mod config;
pub mod knn;
pub mod layers;
mod network;
mod params;
mod standardize;

pub use config::{Architecture, ConvLayer, ModelConfig};
pub use knn::KnnClassifier;
pub use network::{forward, logits, loss_and_gradient, predict_class, probabilities, Classifier};
pub use params::{BoundParams, ModelParams};
pub use standardize::Standardizer;

use crate::error::Result;
use crate::features::{EventClass, FeatureSequence};

/// Anything that assigns a class to a sample.
pub trait Predictor {
    fn predict_sample(&self, seq: &FeatureSequence) -> Result<EventClass>;
}

impl Predictor for Classifier {
    fn predict_sample(&self, seq: &FeatureSequence) -> Result<EventClass> {
        self.predict(seq)
    }
}

impl Predictor for KnnClassifier {
    fn predict_sample(&self, seq: &FeatureSequence) -> Result<EventClass> {
        self.predict(seq)
    }
}
