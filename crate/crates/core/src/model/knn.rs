//! Nearest-neighbour baseline on flattened, standardized sequences.

use crate::error::{Error, Result};
use crate::features::{EventClass, FeatureSequence};
use crate::model::Standardizer;
use crate::NUM_CLASSES;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone)]
pub struct KnnClassifier {
    k: usize,
    scaler: Standardizer,
    points: Vec<(Vec<f64>, EventClass)>,
}

impl KnnClassifier {
    /// Stores the training set, each sample flattened to `T·D` values and
    /// standardized per column with training statistics.
    pub fn fit(train: &[FeatureSequence], k: usize) -> Result<Self> {
        Self::fit_vectors(train.iter().map(|s| (s.data().to_vec(), s.label)).collect(), k)
    }

    /// Same as [`fit`](Self::fit) on arbitrary equal-length vectors.
    pub fn fit_vectors(points: Vec<(Vec<f64>, EventClass)>, k: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Usage("KNN needs a nonempty training set".into()));
        }
        if k == 0 || k > points.len() {
            return Err(Error::Usage(format!(
                "k = {k} must lie in 1..={} (training set size)",
                points.len()
            )));
        }
        let scaler = Standardizer::fit(points.iter().map(|(v, _)| v.as_slice()))?;
        let mut scaled = points;
        for (v, _) in &mut scaled {
            scaler.apply_in_place(v)?;
        }
        Ok(Self {
            k,
            scaler,
            points: scaled,
        })
    }

    pub fn predict(&self, query: &FeatureSequence) -> Result<EventClass> {
        self.predict_vector(query.data())
    }

    /// Majority vote of the `k` nearest training points by Euclidean
    /// distance. Distance ties go to the earlier training point, vote ties
    /// to the lowest label.
    pub fn predict_vector(&self, query: &[f64]) -> Result<EventClass> {
        let mut q = query.to_vec();
        self.scaler.apply_in_place(&mut q)?;
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, (p, _))| (p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = [0usize; NUM_CLASSES];
        for &(_, i) in &dist[..self.k] {
            votes[self.points[i].1.index()] += 1;
        }
        let mut best = 0;
        for c in 1..NUM_CLASSES {
            if votes[c] > votes[best] {
                best = c;
            }
        }
        EventClass::from_index(best)
    }
}
