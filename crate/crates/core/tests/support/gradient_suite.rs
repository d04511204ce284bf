//! Gradient checks shared by the gradient tests and the acceptance run.
//! Each group returns the worst relative error per check, with its bound.

// Each including target uses a different subset.
#![allow(dead_code)]

use stormstack::autodiff::{grad_check, Graph, Padding, Tensor, Var};
use stormstack::features::EventClass;
use stormstack::model::layers::{lstm_cell, multi_head_attention, HeadProjections, LstmGates};
use stormstack::model::{probabilities, Architecture, ConvLayer, ModelConfig, ModelParams};
use stormstack::rng::SplitMix64;
use stormstack::Result;

pub const TRIALS: u64 = 20;
pub const OP_TOL: f64 = 1e-5;
pub const MODEL_TOL: f64 = 1e-4;
const STEP: f64 = 1e-5;

/// Worst relative error of one named check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.worst < self.tolerance
    }
}

fn random(rng: &mut SplitMix64, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(-1.5, 1.5)).collect()).unwrap()
}

fn dim(rng: &mut SplitMix64) -> usize {
    1 + rng.below(8)
}

/// Reduces `y` to a scalar with fixed random weights so every output
/// coordinate contributes a distinct sensitivity.
fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let shape = g.shape(y).to_vec();
    let w = random(&mut SplitMix64::new(seed ^ 0xabcdef), &shape);
    let w = g.constant(&w);
    let p = g.mul(y, w)?;
    g.sum(p)
}

/// Runs `op` on 20 seeded trials; `make` draws the point and any constant
/// operands for one trial.
fn check_op<S, F>(out: &mut Vec<Check>, name: &str, mut make: S, op: F)
where
    S: FnMut(&mut SplitMix64) -> (Tensor, Vec<Tensor>),
    F: Fn(&mut Graph, Var, &[Var]) -> Result<Var>,
{
    let mut worst: f64 = 0.0;
    for trial in 0..TRIALS {
        let mut rng = SplitMix64::new(1000 + trial);
        let (point, others) = make(&mut rng);
        let report = grad_check(
            |g, x| {
                let consts: Vec<Var> = others.iter().map(|t| g.constant(t)).collect();
                let y = op(g, x, &consts)?;
                weighted_sum(g, y, trial)
            },
            &point,
            STEP,
        )
        .unwrap();
        worst = worst.max(report.max_rel_error);
    }
    out.push(Check {
        name: name.to_string(),
        worst,
        tolerance: OP_TOL,
    });
}

pub fn matmul_checks() -> Vec<Check> {
    let mut out = Vec::new();
    check_op(
        &mut out,
        "matmul lhs",
        |r| {
            let (m, k, n) = (dim(r), dim(r), dim(r));
            (random(r, &[m, k]), vec![random(r, &[k, n])])
        },
        |g, x, c| g.matmul(x, c[0]),
    );
    check_op(
        &mut out,
        "matmul rhs",
        |r| {
            let (m, k, n) = (dim(r), dim(r), dim(r));
            (random(r, &[k, n]), vec![random(r, &[m, k])])
        },
        |g, x, c| g.matmul(c[0], x),
    );
    out
}

pub fn elementwise_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let pair = |r: &mut SplitMix64| {
        let s = [dim(r), dim(r)];
        (random(r, &s), vec![random(r, &s)])
    };
    check_op(&mut out, "add", pair, |g, x, c| g.add(x, c[0]));
    check_op(&mut out, "mul", pair, |g, x, c| g.mul(x, c[0]));
    check_op(&mut out, "mul self", pair, |g, x, _| g.mul(x, x));
    check_op(&mut out, "scale", pair, |g, x, _| g.scale(x, -2.5));
    check_op(&mut out, "sigmoid", pair, |g, x, _| g.sigmoid(x));
    check_op(&mut out, "tanh", pair, |g, x, _| g.tanh(x));
    check_op(&mut out, "relu", pair, |g, x, _| g.relu(x));
    check_op(&mut out, "softmax", pair, |g, x, _| g.softmax(x));
    check_op(&mut out, "transpose", pair, |g, x, _| g.transpose(x));
    check_op(&mut out, "mean_rows", pair, |g, x, _| g.mean_rows(x));
    check_op(&mut out, "sum", pair, |g, x, _| g.sum(x));
    out
}

pub fn structural_checks() -> Vec<Check> {
    let mut out = Vec::new();
    check_op(
        &mut out,
        "add_bias input",
        |r| {
            let (m, n) = (dim(r), dim(r));
            (random(r, &[m, n]), vec![random(r, &[n])])
        },
        |g, x, c| g.add_bias(x, c[0]),
    );
    check_op(
        &mut out,
        "add_bias bias",
        |r| {
            let (m, n) = (dim(r), dim(r));
            (random(r, &[n]), vec![random(r, &[m, n])])
        },
        |g, x, c| g.add_bias(c[0], x),
    );
    check_op(
        &mut out,
        "concat",
        |r| {
            let (m, a, b) = (dim(r), dim(r), dim(r));
            (random(r, &[m, a]), vec![random(r, &[m, b])])
        },
        |g, x, c| g.concat(&[c[0], x, c[0], x]),
    );
    check_op(
        &mut out,
        "row and stack_rows",
        |r| {
            let (m, n) = (1 + dim(r), dim(r));
            (random(r, &[m, n]), vec![])
        },
        |g, x, _| {
            let t = g.shape(x)[0];
            let rows = (0..t).rev().map(|i| g.row(x, i)).collect::<Result<Vec<_>>>()?;
            g.stack_rows(&rows)
        },
    );
    check_op(
        &mut out,
        "nll of softmax",
        |r| (random(r, &[1, 3]), vec![]),
        |g, x, _| {
            let p = g.softmax(x)?;
            g.nll(p, 1)
        },
    );
    out
}

pub fn conv1d_checks() -> Vec<Check> {
    let mut out = Vec::new();
    for padding in [Padding::Valid, Padding::Same] {
        let shapes = |r: &mut SplitMix64| {
            let k = 1 + r.below(4);
            let t = k + r.below(5);
            (t, 1 + r.below(4), k, 1 + r.below(4))
        };
        let tag = format!("{padding:?}").to_lowercase();
        check_op(
            &mut out,
            &format!("conv1d input ({tag})"),
            |r| {
                let (t, d, k, f) = shapes(r);
                (random(r, &[t, d]), vec![random(r, &[k, d, f]), random(r, &[f])])
            },
            move |g, x, c| g.conv1d(x, c[0], c[1], padding),
        );
        check_op(
            &mut out,
            &format!("conv1d kernel ({tag})"),
            |r| {
                let (t, d, k, f) = shapes(r);
                (random(r, &[k, d, f]), vec![random(r, &[t, d]), random(r, &[f])])
            },
            move |g, x, c| g.conv1d(c[0], x, c[1], padding),
        );
        check_op(
            &mut out,
            &format!("conv1d bias ({tag})"),
            |r| {
                let (t, d, k, f) = shapes(r);
                (random(r, &[f]), vec![random(r, &[t, d]), random(r, &[k, d, f])])
            },
            move |g, x, c| g.conv1d(c[0], c[1], x, padding),
        );
    }
    // The 6x2 input with a width-3 kernel, held to a tighter bound.
    let mut r = SplitMix64::new(99);
    let x = random(&mut r, &[6, 2]);
    let w = random(&mut r, &[3, 2, 2]);
    let b = random(&mut r, &[2]);
    let report = grad_check(
        |g, w| {
            let (x, b) = (g.constant(&x), g.constant(&b));
            let y = g.conv1d(x, w, b, Padding::Valid)?;
            weighted_sum(g, y, 5)
        },
        &w,
        STEP,
    )
    .unwrap();
    out.push(Check {
        name: "conv1d 6x2 kernel 3".into(),
        worst: report.max_rel_error,
        tolerance: 1e-6,
    });
    out
}

fn gate_tensors(r: &mut SplitMix64, d: usize, h: usize) -> Vec<Tensor> {
    let mut t: Vec<Tensor> = (0..4).map(|_| random(r, &[h + d, h])).collect();
    t.extend((0..4).map(|_| random(r, &[h])));
    t
}

fn gates(c: &[Var]) -> LstmGates {
    LstmGates {
        w_f: c[0],
        w_i: c[1],
        w_c: c[2],
        w_o: c[3],
        b_f: c[4],
        b_i: c[5],
        b_c: c[6],
        b_o: c[7],
    }
}

pub fn layer_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let setup = |r: &mut SplitMix64| {
        let (d, h) = (dim(r), dim(r));
        let mut c = gate_tensors(r, d, h);
        c.push(random(r, &[1, h]));
        c.push(random(r, &[1, h]));
        (random(r, &[1, d]), c)
    };
    check_op(&mut out, "lstm_cell x", setup, |g, x, c| {
        let (h, _) = lstm_cell(g, x, c[8], c[9], &gates(c))?;
        g.sum(h)
    });
    check_op(&mut out, "lstm_cell c", setup, |g, x, c| {
        let (h, cell) = lstm_cell(g, x, c[8], c[9], &gates(c))?;
        g.concat(&[h, cell])
    });
    // Perturb W_c through a point standing in for it.
    let mut worst: f64 = 0.0;
    for trial in 0..TRIALS {
        let mut r = SplitMix64::new(7000 + trial);
        let (d, h) = (dim(&mut r), dim(&mut r));
        let consts = gate_tensors(&mut r, d, h);
        let x = random(&mut r, &[1, d]);
        let state = random(&mut r, &[1, h]);
        let report = grad_check(
            |g, w| {
                let mut c: Vec<Var> = consts.iter().map(|t| g.constant(t)).collect();
                c[2] = w;
                let (xv, s) = (g.constant(&x), g.constant(&state));
                let (h, _) = lstm_cell(g, xv, s, s, &gates(&c))?;
                g.sum(h)
            },
            &consts[2],
            STEP,
        )
        .unwrap();
        worst = worst.max(report.max_rel_error);
    }
    out.push(Check {
        name: "lstm_cell W_c".into(),
        worst,
        tolerance: OP_TOL,
    });
    check_op(
        &mut out,
        "multi_head_attention",
        |r| {
            let (t, m, h) = (4, 8, 2);
            let dk = m / h;
            let mut c: Vec<Tensor> = (0..3 * h).map(|_| random(r, &[m, dk])).collect();
            c.push(random(r, &[m, m]));
            (random(r, &[t, m]), c)
        },
        |g, x, c| {
            let heads: Vec<HeadProjections> = c[..6]
                .chunks(3)
                .map(|p| HeadProjections {
                    w_q: p[0],
                    w_k: p[1],
                    w_v: p[2],
                })
                .collect();
            multi_head_attention(g, x, &heads, c[6])
        },
    );
    out
}

/// Every op check in one list.
pub fn all_op_checks() -> Vec<Check> {
    let mut out = matmul_checks();
    out.extend(elementwise_checks());
    out.extend(structural_checks());
    out.extend(conv1d_checks());
    out.extend(layer_checks());
    out
}

/// The tiny configuration: T=6, D=4, F=3, k=2, H=4, two heads.
pub fn tiny(architecture: Architecture, seed: u64) -> ModelConfig {
    ModelConfig {
        architecture,
        input_dim: 4,
        steps: 6,
        conv_layers: vec![ConvLayer { filters: 3, kernel: 2 }],
        lstm_hidden: 4,
        attention_heads: 2,
        head_dim: 4,
        seed,
        ..ModelConfig::default()
    }
}

/// Loss gradient for every parameter tensor and the input, perturbing one
/// tensor at a time.
pub fn model_max_error(config: &ModelConfig, trial: u64) -> f64 {
    let mut r = SplitMix64::new(500 + trial);
    let params = ModelParams::init(config).unwrap();
    let x = random(&mut r, &[config.steps, config.input_dim]);
    let label = EventClass::from_index(r.below(3)).unwrap().index();
    let mut worst: f64 = 0.0;
    for (name, tensor) in params.iter() {
        let report = grad_check(
            |g, v| {
                let mut bound = params.bind(g, false);
                bound.replace(name, v)?;
                let xv = g.constant(&x);
                let probs = probabilities(g, config, &bound, xv)?;
                g.nll(probs, label)
            },
            tensor,
            1e-4,
        )
        .unwrap();
        worst = worst.max(report.max_rel_error);
    }
    let report = grad_check(
        |g, xv| {
            let bound = params.bind(g, false);
            let probs = probabilities(g, config, &bound, xv)?;
            g.nll(probs, label)
        },
        &x,
        1e-4,
    )
    .unwrap();
    worst.max(report.max_rel_error)
}

/// The full model on the tiny configuration over `trials` seeds.
pub fn model_check(architecture: Architecture, trials: u64) -> Check {
    let worst = (0..trials)
        .map(|t| model_max_error(&tiny(architecture, t), t))
        .fold(0.0, f64::max);
    Check {
        name: format!("{architecture} tiny model"),
        worst,
        tolerance: MODEL_TOL,
    }
}
