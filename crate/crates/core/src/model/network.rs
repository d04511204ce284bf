use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::features::{EventClass, FeatureSequence};
use crate::model::layers::{self, HeadProjections, LstmGates};
use crate::model::params::BoundParams;
use crate::model::{Architecture, ModelConfig, ModelParams, Standardizer};
use crate::NUM_CLASSES;

/// Pre-softmax class scores `[1×3]` for one `[T×D]` input.
pub fn logits(g: &mut Graph, config: &ModelConfig, p: &BoundParams, x: Var) -> Result<Var> {
    let (t, d) = match g.shape(x) {
        [t, d] => (*t, *d),
        s => return Err(Error::Dimension(format!("input must be [T, D], got {s:?}"))),
    };
    if d != config.input_dim {
        return Err(Error::Dimension(format!(
            "input has {d} channels, the network expects {}",
            config.input_dim
        )));
    }
    if t == 0 {
        return Err(Error::Usage("empty sequence".into()));
    }
    let convs = (0..config.conv_layers.len())
        .map(|i| Ok((p.var(&format!("conv{i}.w"))?, p.var(&format!("conv{i}.b"))?)))
        .collect::<Result<Vec<_>>>()?;
    let x = layers::conv_stack(g, x, &convs)?;
    let pooled = match config.architecture {
        Architecture::ConvBiLstmAttention => {
            let fwd = LstmGates::bound(p, "fwd")?;
            let bwd = LstmGates::bound(p, "bwd")?;
            let hidden = layers::bilstm_forward(g, x, &fwd, &bwd)?;
            let heads = (0..config.attention_heads)
                .map(|i| {
                    let w = |proj: &str| p.var(&format!("attn.head{i}.w_{proj}"));
                    Ok(HeadProjections {
                        w_q: w("q")?,
                        w_k: w("k")?,
                        w_v: w("v")?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let attended = layers::multi_head_attention(g, hidden, &heads, p.var("attn.w_o")?)?;
            g.mean_rows(attended)?
        }
        Architecture::BiLstm => {
            let fwd = LstmGates::bound(p, "fwd")?;
            let bwd = LstmGates::bound(p, "bwd")?;
            let hidden = layers::bilstm_forward(g, x, &fwd, &bwd)?;
            g.mean_rows(hidden)?
        }
        Architecture::Lstm => {
            let fwd = LstmGates::bound(p, "fwd")?;
            let hidden = layers::lstm_forward(g, x, &fwd)?;
            g.mean_rows(hidden)?
        }
        Architecture::Rnn => {
            let hidden = layers::rnn_forward(g, x, p.var("rnn.w")?, p.var("rnn.b")?)?;
            g.mean_rows(hidden)?
        }
    };
    let z = g.matmul(pooled, p.var("out.w")?)?;
    g.add_bias(z, p.var("out.b")?)
}

/// Class probabilities `[1×3]` recorded on `g`.
pub fn probabilities(g: &mut Graph, config: &ModelConfig, p: &BoundParams, x: Var) -> Result<Var> {
    let z = logits(g, config, p, x)?;
    g.softmax(z)
}

fn as_array(values: &[f64]) -> [f64; NUM_CLASSES] {
    let mut out = [0.0; NUM_CLASSES];
    out.copy_from_slice(values);
    out
}

/// Class probabilities for an already standardized `[T×D]` input.
pub fn forward(x: &Tensor, params: &ModelParams, config: &ModelConfig) -> Result<[f64; NUM_CLASSES]> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let input = g.constant(x);
    let probs = probabilities(&mut g, config, &bound, input)?;
    Ok(as_array(g.value(probs)))
}

/// Cross-entropy of one sample and its gradient for every parameter, in
/// parameter order.
pub fn loss_and_gradient(
    x: &Tensor,
    label: EventClass,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let input = g.constant(x);
    let probs = probabilities(&mut g, config, &bound, input)?;
    let loss = g.nll(probs, label.index())?;
    g.backward(loss)?;
    let grads = bound
        .iter()
        .map(|(_, v)| {
            g.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; g.value(v).len()])
        })
        .collect();
    Ok((g.value(loss)[0], grads))
}

/// Argmax, ties going to the lowest class index.
pub fn predict_class(probs: &[f64]) -> EventClass {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().take(NUM_CLASSES) {
        if p > probs[best] {
            best = i;
        }
    }
    EventClass::from_index(best).expect("index below NUM_CLASSES")
}

/// A trained network together with the input standardization it was fit with.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub scaler: Standardizer,
}

impl Classifier {
    /// Standardized `[T×D]` tensor for `seq`.
    pub fn prepare(&self, seq: &FeatureSequence) -> Result<Tensor> {
        if seq.channels() != self.config.input_dim {
            return Err(Error::Dimension(format!(
                "sample {} has {} channels, the network expects {}",
                seq.sample_id,
                seq.channels(),
                self.config.input_dim
            )));
        }
        let mut values = seq.data().to_vec();
        for row in values.chunks_mut(seq.channels()) {
            self.scaler.apply_in_place(row)?;
        }
        Tensor::new(&[seq.steps(), seq.channels()], values)
    }

    pub fn probabilities(&self, seq: &FeatureSequence) -> Result<[f64; NUM_CLASSES]> {
        forward(&self.prepare(seq)?, &self.params, &self.config)
    }

    pub fn predict(&self, seq: &FeatureSequence) -> Result<EventClass> {
        Ok(predict_class(&self.probabilities(seq)?))
    }
}
