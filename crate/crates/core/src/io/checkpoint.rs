//! Text checkpoints: a magic line, `key=value` config echo, then one
//! `@name dim0 dim1 ...` line per parameter followed by its values.

use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;

use super::{format_real, parse_int, parse_real, read_text, write_text};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::{Architecture, Classifier, ModelConfig, ModelParams, Standardizer};

pub const CHECKPOINT_MAGIC: &str = "#stormstack-checkpoint v1";

fn join_reals(values: &[f64]) -> String {
    values.iter().map(|&v| format_real(v)).collect::<Vec<_>>().join(" ")
}

pub fn render_checkpoint(model: &Classifier) -> String {
    let c = &model.config;
    let mut out = String::new();
    writeln!(out, "{CHECKPOINT_MAGIC}").unwrap();
    writeln!(out, "architecture={}", c.architecture.key()).unwrap();
    writeln!(out, "model.input_dim={}", c.input_dim).unwrap();
    writeln!(out, "model.steps={}", c.steps).unwrap();
    writeln!(out, "model.conv={}", c.conv_spec()).unwrap();
    writeln!(out, "model.hidden={}", c.lstm_hidden).unwrap();
    writeln!(out, "model.heads={}", c.attention_heads).unwrap();
    writeln!(out, "model.head_dim={}", c.head_dim).unwrap();
    writeln!(out, "model.classes={}", c.classes).unwrap();
    writeln!(out, "model.seed={}", c.seed).unwrap();
    writeln!(out, "input.mean={}", join_reals(&model.scaler.mean)).unwrap();
    writeln!(out, "input.scale={}", join_reals(&model.scaler.scale)).unwrap();
    for (name, t) in model.params.iter() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        writeln!(out, "@{name} {}", dims.join(" ")).unwrap();
        writeln!(out, "{}", join_reals(t.values())).unwrap();
    }
    out
}

pub fn save_checkpoint(path: &Path, model: &Classifier) -> Result<()> {
    write_text(path, &render_checkpoint(model))
}

pub fn load_checkpoint(path: &Path) -> Result<Classifier> {
    parse_checkpoint(&read_text(path)?, &path.display().to_string())
}

fn parse_reals(s: &str, source: &str, line: usize) -> Result<Vec<f64>> {
    s.split_whitespace().map(|v| parse_real(v, source, line)).collect()
}

struct Block {
    name: String,
    shape: Vec<usize>,
    line: usize,
    values: Vec<f64>,
}

/// Parses checkpoint text. `source` names the input in error messages.
pub fn parse_checkpoint(text: &str, source: &str) -> Result<Classifier> {
    let corrupt = |msg: String| Error::Checkpoint(format!("{source}: {msg}"));
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();
    match lines.next() {
        Some((_, l)) if l == CHECKPOINT_MAGIC => {}
        Some((_, l)) if l.starts_with("#stormstack-checkpoint") => {
            return Err(corrupt(format!("unsupported checkpoint version {:?}", l)));
        }
        _ => return Err(corrupt("not a stormstack checkpoint".into())),
    }

    let mut config = ModelConfig::default();
    let mut mean = None;
    let mut scale = None;
    let mut required = vec![
        "architecture",
        "model.input_dim",
        "model.steps",
        "model.conv",
        "model.hidden",
        "model.heads",
        "model.head_dim",
        "model.classes",
        "model.seed",
        "input.mean",
        "input.scale",
    ];
    while let Some(&(n, line)) = lines.peek() {
        if line.starts_with('@') {
            break;
        }
        lines.next();
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| corrupt(format!("line {n}: expected key=value")))?;
        let int = |what| parse_int::<usize>(value, source, n, what);
        match key {
            "architecture" => config.architecture = value.parse::<Architecture>()?,
            "model.input_dim" => config.input_dim = int(key)?,
            "model.steps" => config.steps = int(key)?,
            "model.conv" => config.conv_layers = ModelConfig::parse_conv_spec(value)?,
            "model.hidden" => config.lstm_hidden = int(key)?,
            "model.heads" => config.attention_heads = int(key)?,
            "model.head_dim" => config.head_dim = int(key)?,
            "model.classes" => config.classes = int(key)?,
            "model.seed" => config.seed = parse_int(value, source, n, key)?,
            "input.mean" => mean = Some(parse_reals(value, source, n)?),
            "input.scale" => scale = Some(parse_reals(value, source, n)?),
            _ => return Err(corrupt(format!("line {n}: unknown key {key:?}"))),
        }
        required.retain(|k| *k != key);
    }
    if let Some(k) = required.first() {
        return Err(corrupt(format!("header lacks {k}")));
    }
    config.validate()?;
    let (mean, scale) = (mean.unwrap_or_default(), scale.unwrap_or_default());
    if mean.len() != config.input_dim || scale.len() != config.input_dim {
        return Err(corrupt(format!(
            "input standardization has {}/{} entries for input_dim {}",
            mean.len(),
            scale.len(),
            config.input_dim
        )));
    }

    let mut blocks: Vec<Block> = Vec::new();
    for (n, line) in lines {
        if let Some(head) = line.strip_prefix('@') {
            let mut parts = head.split_whitespace();
            let name = parts
                .next()
                .ok_or_else(|| corrupt(format!("line {n}: parameter block without a name")))?;
            let shape = parts
                .map(|d| parse_int::<usize>(d, source, n, "dimension"))
                .collect::<Result<Vec<_>>>()?;
            if blocks.iter().any(|b| b.name == name) {
                return Err(corrupt(format!("parameter {name} appears twice")));
            }
            blocks.push(Block {
                name: name.to_string(),
                shape,
                line: n,
                values: Vec::new(),
            });
        } else {
            let block = blocks
                .last_mut()
                .ok_or_else(|| corrupt(format!("line {n}: values before any parameter block")))?;
            block.values.extend(parse_reals(line, source, n)?);
        }
    }

    let mut tensors = IndexMap::new();
    for b in blocks {
        let expected: usize = b.shape.iter().product();
        if b.values.len() != expected {
            return Err(corrupt(format!(
                "incomplete block @{} (line {}): {} of {expected} values",
                b.name,
                b.line,
                b.values.len()
            )));
        }
        let t = Tensor::new(&b.shape, b.values).map_err(|e| corrupt(format!("block @{}: {e}", b.name)))?;
        tensors.insert(b.name, t);
    }
    let params = ModelParams::from_tensors(&config, tensors)?;
    Ok(Classifier {
        config,
        params,
        scaler: Standardizer { mean, scale },
    })
}
