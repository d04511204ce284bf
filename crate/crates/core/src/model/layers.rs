//! Differentiable building blocks, each recorded on a [`Graph`].

use crate::autodiff::{Graph, Padding, Var};
use crate::error::{Error, Result};
use crate::model::params::{BoundParams, LSTM_GATES};

/// Gate weights `W_* : (H+D)×H` and biases `b_* : H` of one LSTM direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmGates {
    pub w_f: Var,
    pub w_i: Var,
    pub w_c: Var,
    pub w_o: Var,
    pub b_f: Var,
    pub b_i: Var,
    pub b_c: Var,
    pub b_o: Var,
}

impl LstmGates {
    /// Looks up `lstm.{direction}.w_*` / `b_*`.
    pub fn bound(p: &BoundParams, direction: &str) -> Result<Self> {
        let w = |g: &str| p.var(&format!("lstm.{direction}.w_{g}"));
        let b = |g: &str| p.var(&format!("lstm.{direction}.b_{g}"));
        let [f, i, c, o] = LSTM_GATES;
        Ok(Self {
            w_f: w(f)?,
            w_i: w(i)?,
            w_c: w(c)?,
            w_o: w(o)?,
            b_f: b(f)?,
            b_i: b(i)?,
            b_c: b(c)?,
            b_o: b(o)?,
        })
    }

    pub fn hidden(&self, g: &Graph) -> usize {
        g.shape(self.w_f)[1]
    }
}

fn affine(g: &mut Graph, input: Var, w: Var, b: Var) -> Result<Var> {
    let z = g.matmul(input, w)?;
    g.add_bias(z, b)
}

/// One LSTM step on `[1×D]` input and `[1×H]` state:
///
/// ```text
/// f = σ(W_f·[h, x] + b_f)    i = σ(W_i·[h, x] + b_i)
/// c' = f⊙c + i⊙tanh(W_c·[h, x] + b_c)
/// o = σ(W_o·[h, x] + b_o)    h' = o⊙tanh(c')
/// ```
pub fn lstm_cell(g: &mut Graph, x_t: Var, h_prev: Var, c_prev: Var, p: &LstmGates) -> Result<(Var, Var)> {
    let h = p.hidden(g);
    if g.shape(h_prev) != [1, h] || g.shape(c_prev) != [1, h] {
        return Err(Error::Dimension(format!(
            "lstm state shapes {:?}/{:?} do not match hidden size {h}",
            g.shape(h_prev),
            g.shape(c_prev)
        )));
    }
    let hx = g.concat(&[h_prev, x_t])?;
    let zf = affine(g, hx, p.w_f, p.b_f)?;
    let f = g.sigmoid(zf)?;
    let zi = affine(g, hx, p.w_i, p.b_i)?;
    let i = g.sigmoid(zi)?;
    let zc = affine(g, hx, p.w_c, p.b_c)?;
    let candidate = g.tanh(zc)?;
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, candidate)?;
    let c = g.add(keep, write)?;
    let zo = affine(g, hx, p.w_o, p.b_o)?;
    let o = g.sigmoid(zo)?;
    let tc = g.tanh(c)?;
    let h_t = g.mul(o, tc)?;
    Ok((h_t, c))
}

fn zero_state(g: &mut Graph, h: usize) -> Var {
    g.constant(&crate::autodiff::Tensor::zeros(&[1, h]))
}

/// Runs one LSTM direction over `rows` (each `[1×D]`) from a zero state and
/// returns the hidden state after each row.
pub fn lstm_direction(g: &mut Graph, rows: &[Var], p: &LstmGates) -> Result<Vec<Var>> {
    let hidden = p.hidden(g);
    let mut h = zero_state(g, hidden);
    let mut c = zero_state(g, hidden);
    let mut out = Vec::with_capacity(rows.len());
    for &x in rows {
        (h, c) = lstm_cell(g, x, h, c, p)?;
        out.push(h);
    }
    Ok(out)
}

fn split_rows(g: &mut Graph, x: Var) -> Result<Vec<Var>> {
    let t = g.shape(x)[0];
    if t == 0 {
        return Err(Error::Usage("empty sequence".into()));
    }
    (0..t).map(|i| g.row(x, i)).collect()
}

/// `[T×D] -> [T×2H]`; row `t` is `[→h_t, ←h_t]` where the backward direction
/// reads the sequence reversed and its outputs are re-reversed.
pub fn bilstm_forward(g: &mut Graph, x: Var, forward: &LstmGates, backward: &LstmGates) -> Result<Var> {
    let rows = split_rows(g, x)?;
    let fwd = lstm_direction(g, &rows, forward)?;
    let reversed: Vec<Var> = rows.iter().rev().copied().collect();
    let mut bwd = lstm_direction(g, &reversed, backward)?;
    bwd.reverse();
    let joined = fwd
        .iter()
        .zip(&bwd)
        .map(|(&f, &b)| g.concat(&[f, b]))
        .collect::<Result<Vec<_>>>()?;
    g.stack_rows(&joined)
}

/// Forward-only LSTM over `[T×D]`, stacked to `[T×H]`.
pub fn lstm_forward(g: &mut Graph, x: Var, p: &LstmGates) -> Result<Var> {
    let rows = split_rows(g, x)?;
    let out = lstm_direction(g, &rows, p)?;
    g.stack_rows(&out)
}

/// Elman RNN over `[T×D]`: `h_t = tanh(W·[h_{t-1}, x_t] + b)`, stacked to `[T×H]`.
pub fn rnn_forward(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let rows = split_rows(g, x)?;
    let hidden = g.shape(w)[1];
    let mut h = zero_state(g, hidden);
    let mut out = Vec::with_capacity(rows.len());
    for x_t in rows {
        let hx = g.concat(&[h, x_t])?;
        let z = affine(g, hx, w, b)?;
        h = g.tanh(z)?;
        out.push(h);
    }
    g.stack_rows(&out)
}

/// Output of [`scaled_dot_attention`].
#[derive(Debug, Clone, Copy)]
pub struct Attended {
    pub output: Var,
    /// Row-stochastic `[T×T]` weight matrix.
    pub weights: Var,
}

/// `softmax(Q·Kᵀ / √d_k)·V` with the softmax taken per row; no masking.
pub fn scaled_dot_attention(g: &mut Graph, q: Var, k: Var, v: Var) -> Result<Attended> {
    let dk = g.shape(q)[1];
    if g.shape(k).get(1) != Some(&dk) {
        return Err(Error::Dimension(format!(
            "attention width mismatch: Q {:?}, K {:?}",
            g.shape(q),
            g.shape(k)
        )));
    }
    let kt = g.transpose(k)?;
    let scores = g.matmul(q, kt)?;
    let scaled = g.scale(scores, 1.0 / (dk as f64).sqrt())?;
    let weights = g.softmax(scaled)?;
    let output = g.matmul(weights, v)?;
    Ok(Attended { output, weights })
}

/// Projection matrices of one attention head, each `M×d_k`.
#[derive(Debug, Clone, Copy)]
pub struct HeadProjections {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
}

/// Self-attention over `x : [T×M]`:
/// `Concat(head_1, …, head_h)·W^O` with `head_i = Attention(x·W_i^Q, x·W_i^K, x·W_i^V)`.
pub fn multi_head_attention(g: &mut Graph, x: Var, heads: &[HeadProjections], w_o: Var) -> Result<Var> {
    if heads.is_empty() {
        return Err(Error::Config("attention needs at least one head".into()));
    }
    let outputs = heads
        .iter()
        .map(|h| {
            let q = g.matmul(x, h.w_q)?;
            let k = g.matmul(x, h.w_k)?;
            let v = g.matmul(x, h.w_v)?;
            Ok(scaled_dot_attention(g, q, k, v)?.output)
        })
        .collect::<Result<Vec<_>>>()?;
    let joined = g.concat(&outputs)?;
    g.matmul(joined, w_o)
}

/// Conv layers, each a valid-padded time-axis convolution followed by ReLU.
pub fn conv_stack(g: &mut Graph, mut x: Var, layers: &[(Var, Var)]) -> Result<Var> {
    for (i, &(w, b)) in layers.iter().enumerate() {
        let k = g.shape(w)[0];
        let t = g.shape(x)[0];
        if k > t {
            return Err(Error::Dimension(format!(
                "conv layer {i}: kernel {k} is longer than its input of {t} steps"
            )));
        }
        let z = g.conv1d(x, w, b, Padding::Valid)?;
        x = g.relu(z)?;
    }
    Ok(x)
}
