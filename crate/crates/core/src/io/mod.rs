//! File formats and the synthetic storm-event generator.
//!
//! All formats are UTF-8 text with `\n` line endings. Reals are written with
//! the shortest decimal that parses back to the same `f64` (at most 17
//! significant digits), so every round trip is exact.

mod checkpoint;
mod raw;
mod sequences;
mod synthetic;

use std::fs;
use std::path::Path;

pub use checkpoint::{load_checkpoint, parse_checkpoint, render_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use raw::{
    load_events, load_volumes, parse_events, parse_volumes, render_events, render_volumes, save_events,
    save_volumes,
};
pub use sequences::{load_sequences, parse_sequences, render_sequences, save_sequences};
pub use synthetic::{generate_synthetic, ClassProfile, SyntheticConfig, SyntheticDataset};

use crate::error::{Error, Result};

/// Shortest round-trip decimal for `x`; scientific notation outside
/// `[1e-5, 1e16)` keeps very large and very small magnitudes compact.
pub fn format_real(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub(crate) fn parse_real(token: &str, path: &str, line: usize) -> Result<f64> {
    let v: f64 = token.trim().parse().map_err(|_| Error::Parse {
        path: path.to_string(),
        line,
        msg: format!("{token:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_string(),
            line,
            msg: format!("{token:?} is not finite"),
        });
    }
    Ok(v)
}

pub(crate) fn parse_int<T: std::str::FromStr>(token: &str, path: &str, line: usize, what: &str) -> Result<T> {
    token.trim().parse().map_err(|_| Error::Parse {
        path: path.to_string(),
        line,
        msg: format!("{what} {token:?} is not a valid integer"),
    })
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
