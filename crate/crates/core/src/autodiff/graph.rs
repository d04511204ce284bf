//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records each operation as it executes, so the node list is
//! always in topological order. [`Graph::backward`] walks it once in reverse
//! and accumulates vector-Jacobian products into every node that depends on
//! a trainable leaf.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Zero padding applied by [`Graph::conv1d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    /// No padding; output length `T - k + 1`.
    #[default]
    Valid,
    /// `k - 1` zeros in total, the odd one at the end; output length `T`.
    Same,
}

/// Probabilities below this are clamped before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Softmax(Var),
    Transpose(Var),
    Row(Var, usize),
    StackRows(Vec<Var>),
    MeanRows(Var),
    Sum(Var),
    Conv1d { x: Var, w: Var, b: Var, pad_front: usize },
    Nll { probs: Var, label: usize },
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    kink_trace: Option<Vec<i8>>,
}

fn last_dim(shape: &[usize]) -> usize {
    *shape.last().expect("shapes have rank >= 1")
}

fn matrix(shape: &[usize], what: &str) -> Result<(usize, usize)> {
    match shape {
        [r, c] => Ok((*r, *c)),
        _ => Err(Error::Dimension(format!(
            "{what} expects a matrix, got shape {shape:?}"
        ))),
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records the sign of every ReLU input from now on. Used by the
    /// gradient checker to detect perturbations that straddle a kink.
    pub fn enable_kink_trace(&mut self) {
        self.kink_trace = Some(Vec::new());
    }

    pub fn kink_trace(&self) -> Option<&[i8]> {
        self.kink_trace.as_deref()
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push_unchecked(t.shape().to_vec(), t.values().to_vec(), Op::Leaf, false)
    }

    /// A trainable leaf; `backward` fills its gradient.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push_unchecked(t.shape().to_vec(), t.values().to_vec(), Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Gradient accumulated by the last `backward`, if the node received one.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Snapshot of a node as a standalone tensor, with its gradient attached.
    pub fn tensor(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        let mut t = Tensor::new(&node.shape, node.value.clone()).expect("graph values are finite");
        if let Some(g) = self.grad(v) {
            t.set_grad(g.to_vec()).expect("gradient matches value length");
        }
        t
    }

    fn push_unchecked(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &str, shape: Vec<usize>, value: Vec<f64>, op: Op, inputs: &[Var]) -> Result<Var> {
        if let Some(pos) = value.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "{name} produced non-finite value {} at flat index {pos}",
                value[pos]
            )));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_unchecked(shape, value, op, requires_grad))
    }

    /// `[m×k] · [k×n] -> [m×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix(self.shape(a), "matmul")?;
        let (k2, n) = matrix(self.shape(b), "matmul")?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner extents differ: {:?} · {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &bpj) in row.iter_mut().zip(brow) {
                    *o += aip * bpj;
                }
            }
        }
        self.push("matmul", vec![m, n], out, Op::MatMul(a, b), &[a, b])
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "{what} needs equal shapes, got {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        self.push("add", self.shape(a).to_vec(), out, Op::Add(a, b), &[a, b])
    }

    /// Adds a bias vector to every row: `[..×c] + [c]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let c = last_dim(self.shape(x));
        if self.nodes[bias.0].value.len() != c {
            return Err(Error::Dimension(format!(
                "bias of shape {:?} cannot broadcast over rows of {:?}",
                self.shape(bias),
                self.shape(x)
            )));
        }
        let bv = self.value(bias);
        let out = self
            .value(x)
            .chunks(c)
            .flat_map(|row| row.iter().zip(bv).map(|(x, b)| x + b))
            .collect();
        self.push("add_bias", self.shape(x).to_vec(), out, Op::AddBias(x, bias), &[x, bias])
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        self.push("mul", self.shape(a).to_vec(), out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let out = self.value(x).iter().map(|v| v * factor).collect();
        self.push("scale", self.shape(x).to_vec(), out, Op::Scale(x, factor), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        if let Some(trace) = self.kink_trace.as_mut() {
            let xs = &self.nodes[x.0].value;
            trace.extend(xs.iter().map(|&v| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 }));
        }
        let out = self.value(x).iter().map(|&v| v.max(0.0)).collect();
        self.push("relu", self.shape(x).to_vec(), out, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        self.push("sigmoid", self.shape(x).to_vec(), out, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).iter().map(|v| v.tanh()).collect();
        self.push("tanh", self.shape(x).to_vec(), out, Op::Tanh(x), &[x])
    }

    /// Concatenates along the last axis; leading extents must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
        let lead = &self.shape(first)[..self.shape(first).len() - 1];
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if &s[..s.len() - 1] != lead {
                return Err(Error::Dimension(format!(
                    "concat needs equal leading extents, got {:?} and {:?}",
                    self.shape(first),
                    s
                )));
            }
            total += last_dim(s);
        }
        let outer: usize = lead.iter().product();
        let mut out = Vec::with_capacity(outer * total);
        for r in 0..outer {
            for &p in parts {
                let c = last_dim(self.shape(p));
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        self.push("concat", shape, out, Op::Concat(parts.to_vec()), parts)
    }

    /// Softmax over the last axis, computed after subtracting each slice's max.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let c = last_dim(self.shape(x));
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        self.push("softmax", self.shape(x).to_vec(), out, Op::Softmax(x), &[x])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = matrix(self.shape(x), "transpose")?;
        let xv = self.value(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xv[i * c + j];
            }
        }
        self.push("transpose", vec![c, r], out, Op::Transpose(x), &[x])
    }

    /// Row `i` of a matrix as a `[1×c]` matrix.
    pub fn row(&mut self, x: Var, i: usize) -> Result<Var> {
        let (r, c) = matrix(self.shape(x), "row")?;
        if i >= r {
            return Err(Error::Dimension(format!("row {i} out of range for shape {:?}", self.shape(x))));
        }
        let out = self.value(x)[i * c..(i + 1) * c].to_vec();
        self.push("row", vec![1, c], out, Op::Row(x, i), &[x])
    }

    /// Stacks `[1×c]` rows into an `[n×c]` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = *rows
            .first()
            .ok_or_else(|| Error::Usage("stack of zero rows".into()))?;
        let c = last_dim(self.shape(first));
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            if self.shape(r) != [1, c] {
                return Err(Error::Dimension(format!(
                    "stack_rows expects [1, {c}] rows, got {:?}",
                    self.shape(r)
                )));
            }
            out.extend_from_slice(self.value(r));
        }
        self.push("stack_rows", vec![rows.len(), c], out, Op::StackRows(rows.to_vec()), rows)
    }

    /// Column means, `[r×c] -> [1×c]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = matrix(self.shape(x), "mean_rows")?;
        let mut out = vec![0.0; c];
        for row in self.value(x).chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= r as f64;
        }
        self.push("mean_rows", vec![1, c], out, Op::MeanRows(x), &[x])
    }

    /// Sum of all entries as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).iter().sum();
        self.push("sum", vec![1], vec![total], Op::Sum(x), &[x])
    }

    /// Time-axis cross-correlation: `out[i,f] = b[f] + Σ_j Σ_d w[j,d,f]·x[i+j,d]`.
    ///
    /// `x` is `[T×D]`, `w` is `[k×D×F]`, `b` is `[F]`. No activation is applied.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, padding: Padding) -> Result<Var> {
        let (t, d) = matrix(self.shape(x), "conv1d input")?;
        let (k, wd, f) = match self.shape(w) {
            [k, wd, f] => (*k, *wd, *f),
            s => {
                return Err(Error::Dimension(format!(
                    "conv1d kernel must be [k, D, F], got {s:?}"
                )))
            }
        };
        if wd != d {
            return Err(Error::Dimension(format!(
                "conv1d kernel {:?} does not match input {:?}",
                self.shape(w),
                self.shape(x)
            )));
        }
        if self.nodes[b.0].value.len() != f {
            return Err(Error::Dimension(format!(
                "conv1d bias {:?} does not match {f} filters",
                self.shape(b)
            )));
        }
        let (pad_front, pad_back) = match padding {
            Padding::Valid => (0, 0),
            Padding::Same => ((k - 1) / 2, k - 1 - (k - 1) / 2),
        };
        let padded = t + pad_front + pad_back;
        if k > padded {
            return Err(Error::Dimension(format!(
                "conv1d kernel length {k} exceeds padded input length {padded}"
            )));
        }
        let out_len = padded - k + 1;
        let xv = self.value(x);
        let wv = self.value(w);
        let bv = self.value(b);
        let mut out = Vec::with_capacity(out_len * f);
        for _ in 0..out_len {
            out.extend_from_slice(bv);
        }
        for i in 0..out_len {
            let orow = &mut out[i * f..(i + 1) * f];
            for j in 0..k {
                let Some(src) = (i + j).checked_sub(pad_front).filter(|&s| s < t) else {
                    continue;
                };
                for dd in 0..d {
                    let xval = xv[src * d + dd];
                    if xval == 0.0 {
                        continue;
                    }
                    let wrow = &wv[(j * d + dd) * f..(j * d + dd + 1) * f];
                    for (o, wf) in orow.iter_mut().zip(wrow) {
                        *o += wf * xval;
                    }
                }
            }
        }
        self.push(
            "conv1d",
            vec![out_len, f],
            out,
            Op::Conv1d { x, w, b, pad_front },
            &[x, w, b],
        )
    }

    /// `-ln(max(p[label], PROB_FLOOR))` for a probability vector `p`.
    pub fn nll(&mut self, probs: Var, label: usize) -> Result<Var> {
        let p = self.value(probs);
        if label >= p.len() {
            return Err(Error::Usage(format!(
                "label {label} out of range for {} classes",
                p.len()
            )));
        }
        let loss = -p[label].max(PROB_FLOOR).ln();
        self.push("nll", vec![1], vec![loss], Op::Nll { probs, label }, &[probs])
    }

    /// Propagates `∂loss/∂node` to every node that depends on a trainable leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            {
                let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
                    let input = &nodes[v.0];
                    if input.requires_grad {
                        let buf = grads[v.0].get_or_insert_with(|| vec![0.0; input.value.len()]);
                        f(buf);
                    }
                };
                match &node.op {
                    Op::Leaf => {}
                    Op::MatMul(a, b) => {
                        let (m, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
                        let n = nodes[b.0].shape[1];
                        let av = &nodes[a.0].value;
                        let bv = &nodes[b.0].value;
                        acc(*a, &mut |da| {
                            for i in 0..m {
                                let grow = &g[i * n..(i + 1) * n];
                                for p in 0..k {
                                    let brow = &bv[p * n..(p + 1) * n];
                                    da[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                                }
                            }
                        });
                        acc(*b, &mut |db| {
                            for i in 0..m {
                                let grow = &g[i * n..(i + 1) * n];
                                for p in 0..k {
                                    let aip = av[i * k + p];
                                    if aip == 0.0 {
                                        continue;
                                    }
                                    for (d, gij) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                        *d += aip * gij;
                                    }
                                }
                            }
                        });
                    }
                    Op::Add(a, b) => {
                        for v in [*a, *b] {
                            acc(v, &mut |d| d.iter_mut().zip(&g).for_each(|(d, g)| *d += g));
                        }
                    }
                    Op::AddBias(x, bias) => {
                        acc(*x, &mut |d| d.iter_mut().zip(&g).for_each(|(d, g)| *d += g));
                        acc(*bias, &mut |d| {
                            for row in g.chunks(d.len()) {
                                d.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                            }
                        });
                    }
                    Op::Mul(a, b) => {
                        let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                        acc(*a, &mut |d| {
                            for ((d, g), y) in d.iter_mut().zip(&g).zip(bv) {
                                *d += g * y;
                            }
                        });
                        acc(*b, &mut |d| {
                            for ((d, g), x) in d.iter_mut().zip(&g).zip(av) {
                                *d += g * x;
                            }
                        });
                    }
                    Op::Scale(x, factor) => {
                        acc(*x, &mut |d| d.iter_mut().zip(&g).for_each(|(d, g)| *d += g * factor));
                    }
                    Op::Relu(x) => {
                        let xv = &nodes[x.0].value;
                        acc(*x, &mut |d| {
                            for ((d, g), xi) in d.iter_mut().zip(&g).zip(xv) {
                                if *xi > 0.0 {
                                    *d += g;
                                }
                            }
                        });
                    }
                    Op::Sigmoid(x) => {
                        let y = &node.value;
                        acc(*x, &mut |d| {
                            for ((d, g), y) in d.iter_mut().zip(&g).zip(y) {
                                *d += g * y * (1.0 - y);
                            }
                        });
                    }
                    Op::Tanh(x) => {
                        let y = &node.value;
                        acc(*x, &mut |d| {
                            for ((d, g), y) in d.iter_mut().zip(&g).zip(y) {
                                *d += g * (1.0 - y * y);
                            }
                        });
                    }
                    Op::Concat(parts) => {
                        let total = last_dim(&node.shape);
                        let mut offset = 0;
                        for p in parts {
                            let c = last_dim(&nodes[p.0].shape);
                            acc(*p, &mut |d| {
                                for (r, drow) in d.chunks_mut(c).enumerate() {
                                    let grow = &g[r * total + offset..r * total + offset + c];
                                    drow.iter_mut().zip(grow).for_each(|(d, g)| *d += g);
                                }
                            });
                            offset += c;
                        }
                    }
                    Op::Softmax(x) => {
                        let c = last_dim(&node.shape);
                        let y = &node.value;
                        acc(*x, &mut |d| {
                            for ((drow, grow), yrow) in d.chunks_mut(c).zip(g.chunks(c)).zip(y.chunks(c)) {
                                let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                                for ((d, g), y) in drow.iter_mut().zip(grow).zip(yrow) {
                                    *d += y * (g - dot);
                                }
                            }
                        });
                    }
                    Op::Transpose(x) => {
                        let (r, c) = (nodes[x.0].shape[0], nodes[x.0].shape[1]);
                        acc(*x, &mut |d| {
                            for i in 0..r {
                                for j in 0..c {
                                    d[i * c + j] += g[j * r + i];
                                }
                            }
                        });
                    }
                    Op::Row(x, i) => {
                        let c = g.len();
                        acc(*x, &mut |d| {
                            d[i * c..(i + 1) * c].iter_mut().zip(&g).for_each(|(d, g)| *d += g);
                        });
                    }
                    Op::StackRows(rows) => {
                        let c = last_dim(&node.shape);
                        for (r, row) in rows.iter().enumerate() {
                            acc(*row, &mut |d| {
                                d.iter_mut().zip(&g[r * c..(r + 1) * c]).for_each(|(d, g)| *d += g);
                            });
                        }
                    }
                    Op::MeanRows(x) => {
                        let r = nodes[x.0].shape[0] as f64;
                        acc(*x, &mut |d| {
                            for drow in d.chunks_mut(g.len()) {
                                drow.iter_mut().zip(&g).for_each(|(d, g)| *d += g / r);
                            }
                        });
                    }
                    Op::Sum(x) => {
                        acc(*x, &mut |d| d.iter_mut().for_each(|d| *d += g[0]));
                    }
                    Op::Conv1d { x, w, b, pad_front } => {
                        let (t, dd) = (nodes[x.0].shape[0], nodes[x.0].shape[1]);
                        let (k, f) = (nodes[w.0].shape[0], nodes[w.0].shape[2]);
                        let out_len = node.shape[0];
                        let xv = &nodes[x.0].value;
                        let wv = &nodes[w.0].value;
                        let src = |i: usize, j: usize| (i + j).checked_sub(*pad_front).filter(|&s| s < t);
                        acc(*b, &mut |db| {
                            for grow in g.chunks(f) {
                                db.iter_mut().zip(grow).for_each(|(d, g)| *d += g);
                            }
                        });
                        acc(*w, &mut |dw| {
                            for i in 0..out_len {
                                let grow = &g[i * f..(i + 1) * f];
                                for j in 0..k {
                                    let Some(s) = src(i, j) else { continue };
                                    for c in 0..dd {
                                        let xval = xv[s * dd + c];
                                        let base = (j * dd + c) * f;
                                        for (d, g) in dw[base..base + f].iter_mut().zip(grow) {
                                            *d += g * xval;
                                        }
                                    }
                                }
                            }
                        });
                        acc(*x, &mut |dx| {
                            for i in 0..out_len {
                                let grow = &g[i * f..(i + 1) * f];
                                for j in 0..k {
                                    let Some(s) = src(i, j) else { continue };
                                    for c in 0..dd {
                                        let base = (j * dd + c) * f;
                                        dx[s * dd + c] +=
                                            wv[base..base + f].iter().zip(grow).map(|(w, g)| w * g).sum::<f64>();
                                    }
                                }
                            }
                        });
                    }
                    Op::Nll { probs, label } => {
                        let p = nodes[probs.0].value[*label];
                        acc(*probs, &mut |d| {
                            if p > PROB_FLOOR {
                                d[*label] -= g[0] / p;
                            }
                        });
                    }
                }
            }
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }
}
