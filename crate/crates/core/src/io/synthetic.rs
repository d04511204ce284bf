//! Seeded synthetic storm events standing in for real radar archives.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{default_aux_channels, EventClass, EventRecord, ShsrVolume, WINDOW_MINUTES};
use crate::rng::{sub_seed, SplitMix64};
use crate::NUM_CLASSES;

/// 2021-01-01T00:00Z in minutes since the Unix epoch.
const START_MINUTE: i64 = 18_628 * 1_440;
const YEAR_MINUTES: usize = 365 * 1_440;

/// Reflectivity and auxiliary-weather profile of one event class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    /// Background reflectivity level (dBZ).
    pub base: f64,
    /// Long-run mean of the storm-cell peak (dBZ).
    pub peak: f64,
    pub aux_mean: Vec<f64>,
    pub aux_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub samples_per_class: usize,
    pub steps: usize,
    pub cadence_minutes: i64,
    /// Grid extents `nx × ny × nz`.
    pub grid: [usize; 3],
    /// Extents of the storm-cell block.
    pub cell: [usize; 3],
    /// Profiles in class-index order: tornado, hail, wind.
    pub classes: [ClassProfile; NUM_CLASSES],
    /// AR(1) coefficient of the peak path.
    pub rho: f64,
    /// Background noise and peak-path innovation standard deviation.
    pub sigma: f64,
    pub aux_channels: Vec<String>,
    pub seed: u64,
}

fn profile(base: f64, peak: f64, aux: [(f64, f64); 10]) -> ClassProfile {
    ClassProfile {
        base,
        peak,
        aux_mean: aux.iter().map(|a| a.0).collect(),
        aux_std: aux.iter().map(|a| a.1).collect(),
    }
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        // Auxiliary columns follow DEFAULT_AUX_CHANNELS.
        let tornado = profile(
            10.0,
            55.0,
            [
                (24.0, 5.0),
                (72.0, 14.0),
                (18.0, 5.0),
                (7.0, 5.0),
                (1.0, 0.8),
                (12.0, 6.0),
                (210.0, 70.0),
                (1004.0, 7.0),
                (80.0, 18.0),
                (7.0, 4.0),
            ],
        );
        let hail = profile(
            10.0,
            48.0,
            [
                (23.0, 5.0),
                (66.0, 14.0),
                (16.0, 5.0),
                (6.0, 5.0),
                (1.2, 0.8),
                (11.0, 6.0),
                (220.0, 70.0),
                (1007.0, 7.0),
                (75.0, 18.0),
                (8.0, 4.0),
            ],
        );
        let wind = profile(
            10.0,
            35.0,
            [
                (22.0, 5.0),
                (62.0, 14.0),
                (14.0, 5.0),
                (5.0, 5.0),
                (1.0, 0.8),
                (15.0, 6.0),
                (235.0, 70.0),
                (1009.0, 7.0),
                (70.0, 18.0),
                (9.0, 4.0),
            ],
        );
        Self {
            samples_per_class: 500,
            steps: 12,
            cadence_minutes: 5,
            grid: [8, 8, 4],
            cell: [3, 3, 2],
            classes: [tornado, hail, wind],
            rho: 0.6,
            sigma: 3.0,
            aux_channels: default_aux_channels(),
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.samples_per_class == 0 {
            return bad("samples_per_class must be positive".into());
        }
        if self.steps == 0 || self.cadence_minutes <= 0 {
            return bad("steps and cadence must be positive".into());
        }
        if self.steps as i64 * self.cadence_minutes > WINDOW_MINUTES {
            return bad(format!(
                "{} steps every {} minutes do not fit the {WINDOW_MINUTES}-minute window",
                self.steps, self.cadence_minutes
            ));
        }
        if self.grid.contains(&0) || self.cell.contains(&0) {
            return bad("grid and cell extents must be positive".into());
        }
        if self.cell.iter().zip(&self.grid).any(|(c, g)| c > g) {
            return bad(format!("cell {:?} does not fit grid {:?}", self.cell, self.grid));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be a nonnegative number, got {}", self.sigma));
        }
        for (i, p) in self.classes.iter().enumerate() {
            if p.aux_mean.len() != self.aux_channels.len() || p.aux_std.len() != self.aux_channels.len() {
                return bad(format!(
                    "class {i} profile has {}/{} auxiliary entries for {} channels",
                    p.aux_mean.len(),
                    p.aux_std.len(),
                    self.aux_channels.len()
                ));
            }
            let finite = [p.base, p.peak].iter().chain(&p.aux_mean).all(|v| v.is_finite());
            if !finite || p.aux_std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                return bad(format!("class {i} profile has invalid values"));
            }
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.samples_per_class * NUM_CLASSES
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub events: Vec<EventRecord>,
    /// `volumes[i]` is the look-back sequence of `events[i]`.
    pub volumes: Vec<Vec<ShsrVolume>>,
    pub aux_channels: Vec<String>,
}

/// Keeps named channels physically plausible.
fn constrain(channel: &str, v: f64) -> f64 {
    match channel {
        "humidity" | "cloud_cover" => v.clamp(0.0, 100.0),
        "precip_amount" | "wind_speed" | "visibility" => v.max(0.0),
        "precip_type" => v.round().clamp(0.0, 3.0),
        "wind_direction" => v.rem_euclid(360.0),
        _ => v,
    }
}

/// Generates `samples_per_class` events per class, in class blocks.
///
/// Sample `i` draws from its own generator seeded with `sub_seed(seed, i)`,
/// so the output does not depend on how samples are scheduled. Within a
/// sample the draws are, in order: uniforms for the cell origin (x, y),
/// velocity (x, y), latitude, longitude and event time; Gaussians for the
/// auxiliary channels, the peak path over the steps, then the background
/// cells step by step.
///
/// Background cells are `N(base, σ²)` clipped at zero. The storm cell is a
/// block in the lowest levels whose cells read `max(background, peak_t)`,
/// where the peak follows a stationary AR(1) path around the class mean.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let samples = (0..cfg.total_samples())
        .into_par_iter()
        .map(|i| generate_one(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let (events, volumes) = samples.into_iter().unzip();
    Ok(SyntheticDataset {
        events,
        volumes,
        aux_channels: cfg.aux_channels.clone(),
    })
}

fn generate_one(cfg: &SyntheticConfig, i: usize) -> Result<(EventRecord, Vec<ShsrVolume>)> {
    let label = EventClass::from_index(i / cfg.samples_per_class)?;
    let prof = &cfg.classes[label.index()];
    let mut rng = SplitMix64::new(sub_seed(cfg.seed, i as u64));
    let [nx, ny, nz] = cfg.grid;
    let [cx, cy, cz] = cfg.cell;

    let span = |g: usize, c: usize| (g - c) as f64;
    let origin = [rng.uniform(0.0, span(nx, cx)), rng.uniform(0.0, span(ny, cy))];
    let velocity = [rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)];
    let latitude = rng.uniform(25.0, 49.0);
    let longitude = rng.uniform(-125.0, -67.0);
    let timestamp = START_MINUTE + WINDOW_MINUTES + rng.below(YEAR_MINUTES) as i64;

    let auxiliary = cfg
        .aux_channels
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let v = rng.gaussian(prof.aux_mean[c], prof.aux_std[c]);
            (name.clone(), constrain(name, v))
        })
        .collect();

    let stationary = cfg.sigma / (1.0 - cfg.rho * cfg.rho).sqrt();
    let mut peaks = Vec::with_capacity(cfg.steps);
    let mut dev = rng.gaussian(0.0, stationary);
    for t in 0..cfg.steps {
        if t > 0 {
            dev = cfg.rho * dev + rng.gaussian(0.0, cfg.sigma);
        }
        peaks.push(prof.peak + dev);
    }

    let cells = nx * ny * nz;
    let start = timestamp - WINDOW_MINUTES;
    let mut volumes = Vec::with_capacity(cfg.steps);
    for (t, &peak) in peaks.iter().enumerate() {
        let place = |axis: usize, g: usize, c: usize| {
            let p = origin[axis] + velocity[axis] * t as f64;
            p.round().clamp(0.0, span(g, c)) as usize
        };
        let (x0, y0) = (place(0, nx, cx), place(1, ny, cy));
        let mut values = Vec::with_capacity(cells);
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let mut v = rng.gaussian(prof.base, cfg.sigma).max(0.0);
                    let inside = (x0..x0 + cx).contains(&x) && (y0..y0 + cy).contains(&y) && z < cz;
                    if inside {
                        v = v.max(peak);
                    }
                    values.push(v);
                }
            }
        }
        volumes.push(ShsrVolume::new(cfg.grid, values, start + t as i64 * cfg.cadence_minutes)?);
    }

    let event = EventRecord {
        event_id: format!("evt{i:05}"),
        label,
        latitude,
        longitude,
        timestamp,
        auxiliary,
    };
    Ok((event, volumes))
}
