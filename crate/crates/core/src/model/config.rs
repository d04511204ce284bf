use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::NUM_CLASSES;

/// Which network a configuration and its parameters describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Architecture {
    /// Conv stack → BiLSTM → multi-head self-attention → mean-pool → dense.
    ///
    /// The baselines keep the conv stack and swap the recurrent block, with
    /// no attention before pooling.
    ConvBiLstmAttention,
    /// Conv stack → vanilla tanh RNN → mean-pool → dense.
    Rnn,
    /// Conv stack → forward LSTM → mean-pool → dense.
    Lstm,
    /// Conv stack → BiLSTM → mean-pool → dense.
    BiLstm,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::ConvBiLstmAttention,
        Architecture::Rnn,
        Architecture::Lstm,
        Architecture::BiLstm,
    ];

    /// Short identifier used in file names and checkpoints.
    pub fn key(self) -> &'static str {
        match self {
            Architecture::ConvBiLstmAttention => "model",
            Architecture::Rnn => "rnn",
            Architecture::Lstm => "lstm",
            Architecture::BiLstm => "bilstm",
        }
    }

    /// Row label in metric tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Architecture::ConvBiLstmAttention => "Kalman-Conv BiLSTM with Attention",
            Architecture::Rnn => "RNN",
            Architecture::Lstm => "LSTM",
            Architecture::BiLstm => "BiLSTM",
        }
    }

    pub fn is_bidirectional(self) -> bool {
        matches!(self, Architecture::ConvBiLstmAttention | Architecture::BiLstm)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.key() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub filters: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// Feature channels `D` of the input sequences.
    pub input_dim: usize,
    /// Sequence length `T` the network is built for.
    pub steps: usize,
    pub conv_layers: Vec<ConvLayer>,
    pub lstm_hidden: usize,
    pub attention_heads: usize,
    /// Per-head key width `d_k`.
    pub head_dim: usize,
    pub classes: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::ConvBiLstmAttention,
            input_dim: 16,
            steps: 12,
            conv_layers: vec![ConvLayer { filters: 32, kernel: 3 }; 2],
            lstm_hidden: 64,
            attention_heads: 4,
            head_dim: 32,
            classes: NUM_CLASSES,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes != NUM_CLASSES {
            return Err(Error::Config(format!("classes must be {NUM_CLASSES}, got {}", self.classes)));
        }
        if self.input_dim == 0 || self.steps == 0 || self.lstm_hidden == 0 {
            return Err(Error::Config(
                "input_dim, steps and lstm_hidden must be positive".into(),
            ));
        }
        let mut t = self.steps;
        for (i, layer) in self.conv_layers.iter().enumerate() {
            if layer.filters == 0 || layer.kernel == 0 {
                return Err(Error::Config(format!("conv layer {i} needs positive filters and kernel")));
            }
            if layer.kernel > t {
                return Err(Error::Dimension(format!(
                    "conv layer {i}: kernel {} exceeds its input length {t}",
                    layer.kernel
                )));
            }
            t = t - layer.kernel + 1;
        }
        if self.architecture != Architecture::ConvBiLstmAttention {
            return Ok(());
        }
        if self.attention_heads == 0 || self.head_dim == 0 {
            return Err(Error::Config("attention heads and head_dim must be positive".into()));
        }
        if self.attention_heads * self.head_dim != self.attention_width() {
            return Err(Error::Config(format!(
                "{} heads × {} per head does not cover the attention width {} (2 × lstm_hidden)",
                self.attention_heads,
                self.head_dim,
                self.attention_width()
            )));
        }
        Ok(())
    }

    /// Width `M` the attention block operates on.
    pub fn attention_width(&self) -> usize {
        2 * self.lstm_hidden
    }

    /// Channel count entering the recurrent block.
    pub fn recurrent_input_dim(&self) -> usize {
        self.conv_layers.last().map_or(self.input_dim, |l| l.filters)
    }

    /// Width of the pooled representation fed to the output layer.
    pub fn pooled_dim(&self) -> usize {
        if self.architecture.is_bidirectional() {
            2 * self.lstm_hidden
        } else {
            self.lstm_hidden
        }
    }

    /// `filters:kernel` pairs, comma separated.
    pub fn conv_spec(&self) -> String {
        self.conv_layers
            .iter()
            .map(|l| format!("{}:{}", l.filters, l.kernel))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_conv_spec(s: &str) -> Result<Vec<ConvLayer>> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|part| {
                let (f, k) = part
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("conv layer {part:?} is not filters:kernel")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("conv layer {part:?} is not filters:kernel")))
                };
                Ok(ConvLayer {
                    filters: parse(f)?,
                    kernel: parse(k)?,
                })
            })
            .collect()
    }
}
