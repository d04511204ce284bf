//! Raw event and volume files, the inputs to featurization.
//!
//! `events.csv`: `event_id,label,latitude,longitude,timestamp,<aux...>`, the
//! auxiliary channel names taken from the header.
//!
//! `volumes.csv`: `event_id,timestamp,nx,ny,nz,values`, one volume per row,
//! cells space-separated in x-major order. Missing cells hold `-999`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;

use super::{format_real, parse_int, parse_real, read_text, write_text};
use crate::error::{Error, Result};
use crate::features::{EventClass, EventRecord, ShsrVolume};

const EVENT_COLUMNS: [&str; 5] = ["event_id", "label", "latitude", "longitude", "timestamp"];
const VOLUME_HEADER: &str = "event_id,timestamp,nx,ny,nz,values";

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains([',', '\n']) {
        return Err(Error::Validation(format!("event id {id:?} is empty or contains a separator")));
    }
    Ok(())
}

/// Renders events; every record must carry exactly the channels in `aux_channels`.
pub fn render_events(events: &[EventRecord], aux_channels: &[String]) -> Result<String> {
    let mut out = EVENT_COLUMNS.join(",");
    for c in aux_channels {
        write!(out, ",{c}").unwrap();
    }
    out.push('\n');
    for e in events {
        check_id(&e.event_id)?;
        let aux = e.auxiliary_row(aux_channels)?;
        write!(
            out,
            "{},{},{},{},{}",
            e.event_id,
            e.label.index(),
            format_real(e.latitude),
            format_real(e.longitude),
            e.timestamp
        )
        .unwrap();
        for v in aux {
            write!(out, ",{}", format_real(v)).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_events(path: &Path, events: &[EventRecord], aux_channels: &[String]) -> Result<()> {
    write_text(path, &render_events(events, aux_channels)?)
}

/// Parses events and returns them with the auxiliary channel names in header order.
pub fn parse_events(text: &str, source: &str) -> Result<(Vec<EventRecord>, Vec<String>)> {
    let perr = |line, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| perr(1, "missing header".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < EVENT_COLUMNS.len() || cols[..EVENT_COLUMNS.len()] != EVENT_COLUMNS {
        return Err(perr(1, format!("header must start with {}", EVENT_COLUMNS.join(","))));
    }
    let aux: Vec<String> = cols[EVENT_COLUMNS.len()..].iter().map(|s| s.to_string()).collect();
    let mut events = Vec::new();
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(perr(n, format!("expected {} fields, found {}", cols.len(), f.len())));
        }
        let label = EventClass::from_index(parse_int(f[1], source, n, "label")?).map_err(|e| perr(n, e.to_string()))?;
        let mut auxiliary = BTreeMap::new();
        for (name, v) in aux.iter().zip(&f[EVENT_COLUMNS.len()..]) {
            auxiliary.insert(name.clone(), parse_real(v, source, n)?);
        }
        events.push(EventRecord {
            event_id: f[0].to_string(),
            label,
            latitude: parse_real(f[2], source, n)?,
            longitude: parse_real(f[3], source, n)?,
            timestamp: parse_int(f[4], source, n, "timestamp")?,
            auxiliary,
        });
    }
    Ok((events, aux))
}

pub fn load_events(path: &Path) -> Result<(Vec<EventRecord>, Vec<String>)> {
    parse_events(&read_text(path)?, &path.display().to_string())
}

/// Renders `(event_id, volume)` pairs in the given order.
pub fn render_volumes<'a>(volumes: impl IntoIterator<Item = (&'a str, &'a ShsrVolume)>) -> Result<String> {
    let mut out = format!("{VOLUME_HEADER}\n");
    for (id, v) in volumes {
        check_id(id)?;
        let [nx, ny, nz] = v.dims();
        write!(out, "{id},{},{nx},{ny},{nz},", v.timestamp).unwrap();
        let cells: Vec<String> = v.values().iter().map(|&c| format_real(c)).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn save_volumes<'a>(path: &Path, volumes: impl IntoIterator<Item = (&'a str, &'a ShsrVolume)>) -> Result<()> {
    write_text(path, &render_volumes(volumes)?)
}

/// Parses volumes grouped by event id, in order of first appearance.
pub fn parse_volumes(text: &str, source: &str) -> Result<IndexMap<String, Vec<ShsrVolume>>> {
    let perr = |line, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h == VOLUME_HEADER => {}
        _ => return Err(perr(1, format!("header must be {VOLUME_HEADER}"))),
    }
    let mut out: IndexMap<String, Vec<ShsrVolume>> = IndexMap::new();
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.splitn(6, ',').collect();
        if f.len() != 6 {
            return Err(perr(n, format!("expected 6 fields, found {}", f.len())));
        }
        let dims = [
            parse_int(f[2], source, n, "nx")?,
            parse_int(f[3], source, n, "ny")?,
            parse_int(f[4], source, n, "nz")?,
        ];
        let values = f[5]
            .split_whitespace()
            .map(|v| parse_real(v, source, n))
            .collect::<Result<Vec<_>>>()?;
        let volume = ShsrVolume::new(dims, values, parse_int(f[1], source, n, "timestamp")?)
            .map_err(|e| perr(n, e.to_string()))?;
        out.entry(f[0].to_string()).or_default().push(volume);
    }
    Ok(out)
}

pub fn load_volumes(path: &Path) -> Result<IndexMap<String, Vec<ShsrVolume>>> {
    parse_volumes(&read_text(path)?, &path.display().to_string())
}
