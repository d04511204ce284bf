//! Reflectivity statistics, sample assembly, class balancing and splitting.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kalman;
use crate::rng::SplitMix64;
use crate::NUM_CLASSES;

/// Cells holding this value are treated as missing.
pub const MISSING_SENTINEL: f64 = -999.0;
/// Reflectivity (dBZ) a cell must strictly exceed to count as "above threshold".
pub const DEFAULT_THRESHOLD: f64 = 45.0;
/// Number of reflectivity statistics per time step.
pub const NUM_STATS: usize = 6;
/// Column names of the reflectivity statistics, in storage order.
pub const STAT_NAMES: [&str; NUM_STATS] = ["min", "max", "mean", "variance", "nonzero_count", "above_threshold_count"];
/// Length of the look-back window before an event, in minutes.
pub const WINDOW_MINUTES: i64 = 60;

/// Default auxiliary meteorological channels, in column order.
///
/// `precip_type` is a code: 0 = none, 1 = rain, 2 = snow, 3 = mixed.
pub const DEFAULT_AUX_CHANNELS: [&str; 10] = [
    "temperature",
    "humidity",
    "dew_point",
    "precip_amount",
    "precip_type",
    "wind_speed",
    "wind_direction",
    "pressure",
    "cloud_cover",
    "visibility",
];

pub fn default_aux_channels() -> Vec<String> {
    DEFAULT_AUX_CHANNELS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventClass {
    Tornado = 0,
    Hail = 1,
    Wind = 2,
}

impl EventClass {
    pub const ALL: [EventClass; NUM_CLASSES] = [EventClass::Tornado, EventClass::Hail, EventClass::Wind];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Validation(format!("label {i} is not one of 0 (tornado), 1 (hail), 2 (wind)")))
    }

    pub fn name(self) -> &'static str {
        match self {
            EventClass::Tornado => "tornado",
            EventClass::Hail => "hail",
            EventClass::Wind => "wind",
        }
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Anything carrying a class label; balancing and splitting work on these.
pub trait Labeled {
    fn class(&self) -> EventClass;
}

/// One 3D reflectivity snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ShsrVolume {
    dims: [usize; 3],
    values: Vec<f64>,
    pub missing: f64,
    /// Minutes since the epoch.
    pub timestamp: i64,
}

impl ShsrVolume {
    pub fn new(dims: [usize; 3], values: Vec<f64>, timestamp: i64) -> Result<Self> {
        Self::with_sentinel(dims, values, timestamp, MISSING_SENTINEL)
    }

    pub fn with_sentinel(dims: [usize; 3], values: Vec<f64>, timestamp: i64, missing: f64) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Validation(format!("volume extents must be positive, got {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if n != values.len() {
            return Err(Error::Validation(format!(
                "volume {dims:?} needs {n} cells, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Validation("volume contains NaN cells".into()));
        }
        Ok(Self {
            dims,
            values,
            missing,
            timestamp,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// The six per-volume reflectivity statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShsrStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population variance (divisor N).
    pub variance: f64,
    pub nonzero_count: f64,
    pub above_threshold_count: f64,
}

impl ShsrStats {
    pub fn to_array(self) -> [f64; NUM_STATS] {
        [
            self.min,
            self.max,
            self.mean,
            self.variance,
            self.nonzero_count,
            self.above_threshold_count,
        ]
    }
}

/// Statistics over the non-missing cells of `v`.
///
/// A cell is "nonzero" when `|value| > 0` and "above threshold" when
/// `value > threshold`.
pub fn extract_shsr_stats(v: &ShsrVolume, threshold: f64) -> Result<ShsrStats> {
    let present = || v.values.iter().copied().filter(|&x| x != v.missing);
    let mut count = 0usize;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut total = 0.0;
    let mut nonzero = 0usize;
    let mut above = 0usize;
    for x in present() {
        count += 1;
        min = min.min(x);
        max = max.max(x);
        total += x;
        nonzero += usize::from(x != 0.0);
        above += usize::from(x > threshold);
    }
    if count == 0 {
        return Err(Error::EmptyVolume);
    }
    let mean = total / count as f64;
    let variance = present().map(|x| (x - mean) * (x - mean)).sum::<f64>() / count as f64;
    Ok(ShsrStats {
        min,
        max,
        mean: mean.clamp(min, max),
        variance,
        nonzero_count: nonzero as f64,
        above_threshold_count: above as f64,
    })
}

/// A severe-weather report with its per-event auxiliary measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub event_id: String,
    pub label: EventClass,
    pub latitude: f64,
    pub longitude: f64,
    /// Minutes since the epoch.
    pub timestamp: i64,
    pub auxiliary: BTreeMap<String, f64>,
}

impl EventRecord {
    /// Auxiliary values in `channels` order; the key set must match exactly.
    pub fn auxiliary_row(&self, channels: &[String]) -> Result<Vec<f64>> {
        if self.auxiliary.len() != channels.len() {
            let extra: Vec<_> = self
                .auxiliary
                .keys()
                .filter(|k| !channels.contains(k))
                .collect();
            return Err(Error::Validation(format!(
                "event {} has {} auxiliary channels, expected {} (unexpected: {extra:?})",
                self.event_id,
                self.auxiliary.len(),
                channels.len()
            )));
        }
        channels
            .iter()
            .map(|c| {
                self.auxiliary.get(c).copied().ok_or_else(|| {
                    Error::Validation(format!("event {} is missing auxiliary channel {c}", self.event_id))
                })
            })
            .collect()
    }
}

/// A labeled `T×D` sample; columns are the six statistics then the auxiliary channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub sample_id: String,
    pub label: EventClass,
    steps: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureSequence {
    pub fn new(sample_id: impl Into<String>, label: EventClass, steps: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let sample_id = sample_id.into();
        if steps == 0 || channels == 0 || data.len() != steps * channels {
            return Err(Error::Validation(format!(
                "sample {sample_id}: {steps}×{channels} sequence with {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("sample {sample_id} contains non-finite values")));
        }
        Ok(Self {
            sample_id,
            label,
            steps,
            channels,
            data,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Row-major `T×D` values.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    /// Checks the statistic columns of an unsmoothed sample: nonnegative
    /// variance, integral nonnegative counts, and `min ≤ mean ≤ max`.
    pub fn check_stat_invariants(&self) -> Result<()> {
        if self.channels < NUM_STATS {
            return Err(Error::Validation(format!(
                "sample {} has {} channels, fewer than the {NUM_STATS} statistics",
                self.sample_id, self.channels
            )));
        }
        for t in 0..self.steps {
            let r = self.row(t);
            let bad = |what: &str| Error::Validation(format!("sample {} step {t}: {what}", self.sample_id));
            if !(r[0] <= r[2] && r[2] <= r[1]) {
                return Err(bad("expected min <= mean <= max"));
            }
            if r[3] < 0.0 {
                return Err(bad("negative variance"));
            }
            for c in [4, 5] {
                if r[c] < 0.0 || r[c].fract() != 0.0 {
                    return Err(bad("counts must be nonnegative integers"));
                }
            }
        }
        Ok(())
    }
}

impl Labeled for FeatureSequence {
    fn class(&self) -> EventClass {
        self.label
    }
}

/// Assembles one sample from the volumes observed in the hour before an event.
///
/// Volumes must be strictly increasing in time and fall inside
/// `[event - 60 min, event)`.
pub fn build_sample(
    event: &EventRecord,
    volumes: &[ShsrVolume],
    threshold: f64,
    aux_channels: &[String],
) -> Result<FeatureSequence> {
    if volumes.is_empty() {
        return Err(Error::Validation(format!("event {} has no volumes", event.event_id)));
    }
    let start = event.timestamp - WINDOW_MINUTES;
    for (i, v) in volumes.iter().enumerate() {
        if v.timestamp < start || v.timestamp >= event.timestamp {
            return Err(Error::Validation(format!(
                "event {}: volume {i} at minute {} lies outside [{start}, {})",
                event.event_id, v.timestamp, event.timestamp
            )));
        }
        if i > 0 && v.timestamp <= volumes[i - 1].timestamp {
            return Err(Error::Validation(format!(
                "event {}: volume timestamps are not strictly increasing at index {i}",
                event.event_id
            )));
        }
    }
    let aux = event.auxiliary_row(aux_channels)?;
    let channels = NUM_STATS + aux.len();
    let mut data = Vec::with_capacity(volumes.len() * channels);
    for v in volumes {
        data.extend_from_slice(&extract_shsr_stats(v, threshold)?.to_array());
        data.extend_from_slice(&aux);
    }
    FeatureSequence::new(event.event_id.clone(), event.label, volumes.len(), channels, data)
}

/// Kalman-smooths every channel of a sample. See [`kalman::smooth_series`].
pub fn smooth_sequence(seq: &FeatureSequence, q: f64, r: f64) -> Result<FeatureSequence> {
    let data = kalman::smooth_series(&seq.data, seq.channels, q, r)?;
    FeatureSequence::new(seq.sample_id.clone(), seq.label, seq.steps, seq.channels, data)
}

/// Per-event [`build_sample`] followed by [`smooth_sequence`], in event order.
pub fn featurize(
    events: &[EventRecord],
    volumes: &[Vec<ShsrVolume>],
    threshold: f64,
    aux_channels: &[String],
    q: f64,
    r: f64,
) -> Result<Vec<FeatureSequence>> {
    if events.len() != volumes.len() {
        return Err(Error::Validation(format!(
            "{} events but {} volume sequences",
            events.len(),
            volumes.len()
        )));
    }
    events
        .par_iter()
        .zip(volumes)
        .map(|(e, v)| smooth_sequence(&build_sample(e, v, threshold, aux_channels)?, q, r))
        .collect()
}

pub fn class_counts<T: Labeled>(samples: &[T]) -> [usize; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for s in samples {
        counts[s.class().index()] += 1;
    }
    counts
}

/// Downsamples every class to the size of the smallest one.
///
/// Classes are visited in label order with one generator seeded by `seed`;
/// each oversized class keeps the first `n` indices of a partial
/// Fisher–Yates shuffle. The output preserves input order.
pub fn balance<T: Labeled + Clone>(samples: &[T], seed: u64) -> Result<Vec<T>> {
    let counts = class_counts(samples);
    if counts.contains(&0) {
        return Err(Error::Usage(format!(
            "cannot balance: class counts are tornado={}, hail={}, wind={}",
            counts[0], counts[1], counts[2]
        )));
    }
    let n = *counts.iter().min().expect("three classes");
    let mut rng = SplitMix64::new(seed);
    let mut keep = vec![false; samples.len()];
    for class in EventClass::ALL {
        let members: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.class() == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() == n {
            members.iter().for_each(|&i| keep[i] = true);
        } else {
            for j in rng.sample_indices(members.len(), n) {
                keep[members[j]] = true;
            }
        }
    }
    Ok(samples
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(s, _)| s.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
    pub seed: u64,
    pub fractions: [f64; 3],
}

/// Number of items per part for a class of size `n`: floors for train and
/// validation, remainder for test. A 1e-9 slack absorbs products such as
/// `0.29 * 100` that land just below an integer.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let part = |f: f64| ((f * n as f64 + 1e-9).floor() as usize).min(n);
    let train = part(fractions[0]);
    let validation = part(fractions[1]).min(n - train);
    [train, validation, n - train - validation]
}

/// Stratified split. Each class, in label order, is fully shuffled with one
/// generator seeded by `seed` and sliced into train/validation/test. Each
/// part lists its members in input order.
pub fn split<T: Labeled + Clone>(samples: &[T], fractions: [f64; 3], seed: u64) -> Result<DatasetSplit<T>> {
    if fractions.iter().any(|f| f.is_nan() || *f < 0.0) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!(
            "split fractions must be nonnegative and sum to 1, got {fractions:?}"
        )));
    }
    if samples.is_empty() {
        return Err(Error::Usage("cannot split an empty dataset".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let mut part_of = vec![0u8; samples.len()];
    for class in EventClass::ALL {
        let mut members: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.class() == class)
            .map(|(i, _)| i)
            .collect();
        rng.shuffle(&mut members);
        let [tr, va, _] = split_sizes(members.len(), fractions);
        for (pos, &i) in members.iter().enumerate() {
            part_of[i] = if pos < tr {
                0
            } else if pos < tr + va {
                1
            } else {
                2
            };
        }
    }
    let pick = |p: u8| {
        samples
            .iter()
            .zip(&part_of)
            .filter(|(_, &q)| q == p)
            .map(|(s, _)| s.clone())
            .collect()
    };
    Ok(DatasetSplit {
        train: pick(0),
        validation: pick(1),
        test: pick(2),
        seed,
        fractions,
    })
}
