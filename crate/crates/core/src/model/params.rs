use indexmap::IndexMap;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{Architecture, ModelConfig};
use crate::rng::SplitMix64;

pub const LSTM_GATES: [&str; 4] = ["f", "i", "c", "o"];

/// Named parameter tensors of one network, in initialization order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    tensors: IndexMap<String, Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Xavier { fan_in: usize, fan_out: usize },
    Zero,
    One,
}

fn layout(config: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let mut out = Vec::new();
    let h = config.lstm_hidden;
    let mut push = |name: String, shape: Vec<usize>, init: Init| out.push((name, shape, init));

    let mut d_in = config.input_dim;
    for (i, layer) in config.conv_layers.iter().enumerate() {
        let (k, f) = (layer.kernel, layer.filters);
        push(
            format!("conv{i}.w"),
            vec![k, d_in, f],
            Init::Xavier {
                fan_in: k * d_in,
                fan_out: k * f,
            },
        );
        push(format!("conv{i}.b"), vec![f], Init::Zero);
        d_in = f;
    }

    let d = config.recurrent_input_dim();
    let lstm_dirs: &[&str] = match config.architecture {
        Architecture::Rnn => &[],
        Architecture::Lstm => &["fwd"],
        Architecture::BiLstm | Architecture::ConvBiLstmAttention => &["fwd", "bwd"],
    };
    for dir in lstm_dirs {
        for gate in LSTM_GATES {
            push(
                format!("lstm.{dir}.w_{gate}"),
                vec![h + d, h],
                Init::Xavier { fan_in: h + d, fan_out: h },
            );
        }
        for gate in LSTM_GATES {
            let init = if gate == "f" { Init::One } else { Init::Zero };
            push(format!("lstm.{dir}.b_{gate}"), vec![h], init);
        }
    }
    if config.architecture == Architecture::Rnn {
        push("rnn.w".into(), vec![h + d, h], Init::Xavier { fan_in: h + d, fan_out: h });
        push("rnn.b".into(), vec![h], Init::Zero);
    }

    if config.architecture == Architecture::ConvBiLstmAttention {
        let m = config.attention_width();
        let dk = config.head_dim;
        for i in 0..config.attention_heads {
            for proj in ["q", "k", "v"] {
                push(
                    format!("attn.head{i}.w_{proj}"),
                    vec![m, dk],
                    Init::Xavier { fan_in: m, fan_out: dk },
                );
            }
        }
        push("attn.w_o".into(), vec![m, m], Init::Xavier { fan_in: m, fan_out: m });
    }

    let p = config.pooled_dim();
    push(
        "out.w".into(),
        vec![p, config.classes],
        Init::Xavier {
            fan_in: p,
            fan_out: config.classes,
        },
    );
    push("out.b".into(), vec![config.classes], Init::Zero);
    out
}

impl ModelParams {
    /// Fresh parameters: Glorot-uniform weights drawn in name order from one
    /// generator seeded with `config.seed`; zero biases except LSTM forget
    /// biases, which start at 1.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::new(config.seed);
        let mut tensors = IndexMap::new();
        for (name, shape, init) in layout(config) {
            let n: usize = shape.iter().product();
            let values = match init {
                Init::Xavier { fan_in, fan_out } => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..n).map(|_| rng.uniform(-limit, limit)).collect()
                }
                Init::Zero => vec![0.0; n],
                Init::One => vec![1.0; n],
            };
            tensors.insert(name, Tensor::new(&shape, values)?);
        }
        Ok(Self { tensors })
    }

    /// Expected `(name, shape)` pairs for `config`, in order.
    pub fn expected_layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        layout(config).into_iter().map(|(n, s, _)| (n, s)).collect()
    }

    /// Wraps loaded tensors after checking the name set and every shape.
    pub fn from_tensors(config: &ModelConfig, mut tensors: IndexMap<String, Tensor>) -> Result<Self> {
        let expected = Self::expected_layout(config);
        for name in tensors.keys() {
            if !expected.iter().any(|(n, _)| n == name) {
                return Err(Error::Checkpoint(format!("unknown parameter {name}")));
            }
        }
        let mut ordered = IndexMap::new();
        for (name, shape) in expected {
            let t = tensors
                .shift_remove(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, config expects {shape:?}",
                    t.shape()
                )));
            }
            ordered.insert(name, t);
        }
        Ok(Self { tensors: ordered })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Adds every tensor to `g`, as trainable leaves when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let v = if trainable { g.param(t) } else { g.constant(t) };
                (name.clone(), v)
            })
            .collect();
        BoundParams { vars }
    }
}

/// Graph handles for every parameter, looked up by name.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: IndexMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Usage(format!("parameter {name} is not bound")))
    }

    /// Replaces the handle for `name`, e.g. with a gradient-checked leaf.
    pub fn replace(&mut self, name: &str, v: Var) -> Result<()> {
        let slot = self
            .vars
            .get_mut(name)
            .ok_or_else(|| Error::Usage(format!("parameter {name} is not bound")))?;
        *slot = v;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_names() {
        let p = ModelParams::init(&ModelConfig::default()).unwrap();
        let names: Vec<_> = p.names().collect();
        assert_eq!(names[..4], ["conv0.w", "conv0.b", "conv1.w", "conv1.b"]);
        assert!(names.contains(&"lstm.bwd.w_o"));
        assert!(names.contains(&"attn.head3.w_v"));
        assert_eq!(names[names.len() - 2..], ["out.w", "out.b"]);
        assert_eq!(p.get("lstm.fwd.w_f").unwrap().shape(), &[96, 64]);
        assert_eq!(p.get("conv1.w").unwrap().shape(), &[3, 32, 32]);
        assert_eq!(p.get("out.w").unwrap().shape(), &[128, 3]);
        assert!(p.get("lstm.fwd.b_f").unwrap().values().iter().all(|&v| v == 1.0));
        assert!(p.get("lstm.fwd.b_i").unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_respects_glorot_bounds() {
        let c = ModelConfig::default();
        let p = ModelParams::init(&c).unwrap();
        let limit = (6.0f64 / (96 + 64) as f64).sqrt();
        assert!(p.get("lstm.bwd.w_c").unwrap().values().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn init_is_seeded() {
        let c = ModelConfig::default();
        assert_eq!(ModelParams::init(&c).unwrap(), ModelParams::init(&c).unwrap());
        let other = ModelConfig { seed: 7, ..c.clone() };
        assert_ne!(ModelParams::init(&c).unwrap(), ModelParams::init(&other).unwrap());
    }

    #[test]
    fn baseline_layouts() {
        for (arch, first) in [
            (Architecture::Rnn, "rnn.w"),
            (Architecture::Lstm, "lstm.fwd.w_f"),
            (Architecture::BiLstm, "lstm.fwd.w_f"),
        ] {
            let c = ModelConfig {
                architecture: arch,
                ..ModelConfig::default()
            };
            let p = ModelParams::init(&c).unwrap();
            let names: Vec<&str> = p.names().collect();
            assert_eq!(&names[..4], ["conv0.w", "conv0.b", "conv1.w", "conv1.b"]);
            assert_eq!(names[4], first);
            assert_eq!(p.get("out.w").unwrap().shape()[0], c.pooled_dim());
            assert!(names.iter().all(|n| !n.starts_with("attn")));
        }
    }

    #[test]
    fn from_tensors_rejects_unknown_and_missing() {
        let c = ModelConfig {
            architecture: Architecture::Rnn,
            ..ModelConfig::default()
        };
        let p = ModelParams::init(&c).unwrap();
        let mut map: IndexMap<String, Tensor> = p.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        map.insert("bogus".into(), Tensor::zeros(&[1]));
        assert!(matches!(ModelParams::from_tensors(&c, map.clone()), Err(Error::Checkpoint(_))));
        map.shift_remove("bogus");
        map.shift_remove("rnn.b");
        assert!(matches!(ModelParams::from_tensors(&c, map), Err(Error::Checkpoint(_))));
    }
}
