//! Line-oriented `key=value` run configuration.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use stormstack::features::{EventClass, DEFAULT_THRESHOLD};
use stormstack::io::{format_real, SyntheticConfig};
use stormstack::kalman::{DEFAULT_Q, DEFAULT_R};
use stormstack::model::{knn, Architecture, ModelConfig};
use stormstack::train::TrainConfig;
use stormstack::{Error, Result, NUM_CLASSES};

/// A baseline that can be requested next to the main model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Baseline {
    Knn,
    Net(Architecture),
}

impl Baseline {
    /// Every baseline, in report row order.
    pub const ALL: [Baseline; 4] = [
        Baseline::Knn,
        Baseline::Net(Architecture::Rnn),
        Baseline::Net(Architecture::Lstm),
        Baseline::Net(Architecture::BiLstm),
    ];

    pub fn key(self) -> &'static str {
        match self {
            Baseline::Knn => "knn",
            Baseline::Net(a) => a.key(),
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Baseline::Knn => "KNN",
            Baseline::Net(a) => a.display_name(),
        }
    }
}

/// Parses `knn,rnn,...`; `none` or an empty list selects no baselines.
/// The result is deduplicated and in report row order.
pub fn parse_baselines(s: &str) -> Result<Vec<Baseline>> {
    let s = s.trim();
    if s.is_empty() || s == "none" {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        let b = Baseline::ALL
            .into_iter()
            .find(|b| b.key() == part)
            .ok_or_else(|| Error::Usage(format!("unknown baseline {part:?}; expected knn, rnn, lstm or bilstm")))?;
        out.push(b);
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Every tunable of a pipeline run. The seed drives generation, balancing,
/// splitting, initialization and batch order alike.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub baselines: Vec<Baseline>,
    pub positive_class: EventClass,
    pub synthetic: SyntheticConfig,
    pub threshold: f64,
    pub split: [f64; 3],
    pub kalman_q: f64,
    pub kalman_r: f64,
    pub model: ModelConfig,
    pub knn_k: usize,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            baselines: Baseline::ALL.to_vec(),
            positive_class: EventClass::Tornado,
            synthetic: SyntheticConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            split: [0.8, 0.1, 0.1],
            kalman_q: DEFAULT_Q,
            kalman_r: DEFAULT_R,
            model: ModelConfig::default(),
            knn_k: knn::DEFAULT_K,
            train: TrainConfig::default(),
        }
    }
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn list<T: FromStr + Copy, const N: usize>(key: &str, value: &str) -> Result<[T; N]> {
    let parts = value
        .split(',')
        .map(|p| scalar::<T>(key, p))
        .collect::<Result<Vec<T>>>()?;
    parts
        .try_into()
        .map_err(|_| Error::Config(format!("{key}: expected {N} comma-separated values, got {value:?}")))
}

fn join<T: ToString>(values: impl IntoIterator<Item = T>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn reals(values: impl IntoIterator<Item = f64>) -> String {
    join(values.into_iter().map(format_real))
}

impl RunConfig {
    /// Reads `path` on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key=value, got {raw:?}", i + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.synthetic;
        match key {
            "seed" => self.seed = scalar(key, value)?,
            "baselines" => self.baselines = parse_baselines(value)?,
            "positive_class" => self.positive_class = EventClass::from_index(scalar(key, value)?)?,
            "data.samples_per_class" => s.samples_per_class = scalar(key, value)?,
            "data.steps" => s.steps = scalar(key, value)?,
            "data.cadence_minutes" => s.cadence_minutes = scalar(key, value)?,
            "data.grid" => s.grid = list(key, value)?,
            "data.cell" => s.cell = list(key, value)?,
            "data.rho" => s.rho = scalar(key, value)?,
            "data.sigma" => s.sigma = scalar(key, value)?,
            "data.base" | "data.peak" => {
                let v: [f64; NUM_CLASSES] = list(key, value)?;
                for (p, v) in s.classes.iter_mut().zip(v) {
                    if key == "data.base" {
                        p.base = v;
                    } else {
                        p.peak = v;
                    }
                }
            }
            "data.threshold" => self.threshold = scalar(key, value)?,
            "data.split" => self.split = list(key, value)?,
            "kalman.q" => self.kalman_q = scalar(key, value)?,
            "kalman.r" => self.kalman_r = scalar(key, value)?,
            "model.conv" => self.model.conv_layers = ModelConfig::parse_conv_spec(value)?,
            "model.hidden" => self.model.lstm_hidden = scalar(key, value)?,
            "model.heads" => self.model.attention_heads = scalar(key, value)?,
            "model.head_dim" => self.model.head_dim = scalar(key, value)?,
            "model.knn_k" => self.knn_k = scalar(key, value)?,
            "train.learning_rate" => self.train.learning_rate = scalar(key, value)?,
            "train.batch_size" => self.train.batch_size = scalar(key, value)?,
            "train.max_epochs" => self.train.max_epochs = scalar(key, value)?,
            "train.patience" => self.train.patience = scalar(key, value)?,
            "train.beta1" => self.train.beta1 = scalar(key, value)?,
            "train.beta2" => self.train.beta2 = scalar(key, value)?,
            "train.epsilon" => self.train.epsilon = scalar(key, value)?,
            _ => return Err(Error::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Propagates the run seed and checks every section.
    pub fn resolve(mut self) -> Result<Self> {
        self.synthetic.seed = self.seed;
        self.model.seed = self.seed;
        self.train.seed = self.seed;
        self.synthetic.validate()?;
        self.train.validate()?;
        if self.knn_k == 0 {
            return Err(Error::Config("model.knn_k must be positive".into()));
        }
        if !(self.threshold.is_finite()) {
            return Err(Error::Config("data.threshold must be finite".into()));
        }
        if !(self.kalman_q >= 0.0 && self.kalman_r > 0.0) {
            return Err(Error::Config("kalman.q must be >= 0 and kalman.r > 0".into()));
        }
        Ok(self)
    }

    /// Network configuration for `architecture`; the input shape is filled
    /// in from the data at training time.
    pub fn model_config(&self, architecture: Architecture) -> ModelConfig {
        ModelConfig {
            architecture,
            ..self.model.clone()
        }
    }

    /// The full configuration in the same syntax `apply_text` reads.
    pub fn echo(&self) -> String {
        let s = &self.synthetic;
        let keys = if self.baselines.is_empty() {
            "none".to_string()
        } else {
            join(self.baselines.iter().map(|b| b.key()))
        };
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k}={v}").unwrap();
        kv("seed", self.seed.to_string());
        kv("baselines", keys);
        kv("positive_class", self.positive_class.index().to_string());
        kv("data.samples_per_class", s.samples_per_class.to_string());
        kv("data.steps", s.steps.to_string());
        kv("data.cadence_minutes", s.cadence_minutes.to_string());
        kv("data.grid", join(s.grid));
        kv("data.cell", join(s.cell));
        kv("data.rho", format_real(s.rho));
        kv("data.sigma", format_real(s.sigma));
        kv("data.base", reals(s.classes.iter().map(|p| p.base)));
        kv("data.peak", reals(s.classes.iter().map(|p| p.peak)));
        kv("data.threshold", format_real(self.threshold));
        kv("data.split", reals(self.split));
        kv("kalman.q", format_real(self.kalman_q));
        kv("kalman.r", format_real(self.kalman_r));
        kv("model.conv", self.model.conv_spec());
        kv("model.hidden", self.model.lstm_hidden.to_string());
        kv("model.heads", self.model.attention_heads.to_string());
        kv("model.head_dim", self.model.head_dim.to_string());
        kv("model.knn_k", self.knn_k.to_string());
        kv("train.learning_rate", format_real(self.train.learning_rate));
        kv("train.batch_size", self.train.batch_size.to_string());
        kv("train.max_epochs", self.train.max_epochs.to_string());
        kv("train.patience", self.train.patience.to_string());
        kv("train.beta1", format_real(self.train.beta1));
        kv("train.beta2", format_real(self.train.beta2));
        kv("train.epsilon", format_real(self.train.epsilon));
        out
    }
}
