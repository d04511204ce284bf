//! `sample_id,t,label,f_1,...,f_D` sequence files.

use std::fmt::Write as _;
use std::path::Path;

use super::{format_real, parse_int, parse_real, read_text, write_text};
use crate::error::{Error, Result};
use crate::features::{EventClass, FeatureSequence};

/// Renders samples one row per step. Every sample must share one width `D`.
pub fn render_sequences(samples: &[FeatureSequence]) -> Result<String> {
    let d = samples.first().map_or(0, FeatureSequence::channels);
    let mut out = String::from("sample_id,t,label");
    for j in 1..=d {
        write!(out, ",f_{j}").unwrap();
    }
    out.push('\n');
    for s in samples {
        if s.channels() != d {
            return Err(Error::Validation(format!(
                "sample {} has {} channels, expected {d}",
                s.sample_id,
                s.channels()
            )));
        }
        if s.sample_id.contains([',', '\n']) {
            return Err(Error::Validation(format!("sample id {:?} contains a separator", s.sample_id)));
        }
        for t in 0..s.steps() {
            write!(out, "{},{t},{}", s.sample_id, s.label.index()).unwrap();
            for &v in s.row(t) {
                out.push(',');
                out.push_str(&format_real(v));
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn save_sequences(path: &Path, samples: &[FeatureSequence]) -> Result<()> {
    write_text(path, &render_sequences(samples)?)
}

pub fn load_sequences(path: &Path) -> Result<Vec<FeatureSequence>> {
    parse_sequences(&read_text(path)?, &path.display().to_string())
}

struct Pending {
    id: String,
    label: EventClass,
    steps: usize,
    data: Vec<f64>,
}

/// Parses sequence text. `source` names the input in error messages.
pub fn parse_sequences(text: &str, source: &str) -> Result<Vec<FeatureSequence>> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let d = cols.len().saturating_sub(3);
    let header_ok = cols.len() >= 3
        && cols[..3] == ["sample_id", "t", "label"]
        && cols[3..].iter().enumerate().all(|(j, c)| *c == format!("f_{}", j + 1));
    if !header_ok {
        return Err(parse_err(1, format!("header must be sample_id,t,label,f_1,...,f_D, got {header:?}")));
    }

    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut current: Option<Pending> = None;
    let finish = |p: Pending, out: &mut Vec<FeatureSequence>| -> Result<()> {
        out.push(FeatureSequence::new(p.id, p.label, p.steps, d, p.data)?);
        Ok(())
    };
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 3 {
            return Err(parse_err(n, format!("expected {} fields, found {}", d + 3, fields.len())));
        }
        let id = fields[0];
        let t: usize = parse_int(fields[1], source, n, "step")?;
        let label_idx: usize = parse_int(fields[2], source, n, "label")?;
        let label = EventClass::from_index(label_idx).map_err(|e| parse_err(n, e.to_string()))?;
        let values = fields[3..]
            .iter()
            .map(|f| parse_real(f, source, n))
            .collect::<Result<Vec<f64>>>()?;

        let continues = current.as_ref().is_some_and(|p| p.id == id);
        if !continues {
            if let Some(p) = current.take() {
                finish(p, &mut out)?;
            }
            if !seen.insert(id.to_string()) {
                return Err(Error::Validation(format!(
                    "{source}:{n}: rows of sample {id} are not contiguous"
                )));
            }
            current = Some(Pending {
                id: id.to_string(),
                label,
                steps: 0,
                data: Vec::new(),
            });
        }
        let p = current.as_mut().expect("pending sample");
        if p.label != label {
            return Err(Error::Validation(format!(
                "{source}:{n}: sample {id} changes label from {} to {}",
                p.label, label
            )));
        }
        if t != p.steps {
            return Err(Error::Validation(format!(
                "{source}:{n}: sample {id} expected step {}, found {t}",
                p.steps
            )));
        }
        p.steps += 1;
        p.data.extend(values);
    }
    if let Some(p) = current.take() {
        finish(p, &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_is_empty() {
        assert!(parse_sequences("sample_id,t,label,f_1\n", "x").unwrap().is_empty());
    }

    #[test]
    fn one_sample_two_by_three() {
        let text = "sample_id,t,label,f_1,f_2,f_3\na,0,1,1,2,3\na,1,1,4,5,6\n";
        let s = parse_sequences(text, "x").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].steps(), s[0].channels()), (2, 3));
        assert_eq!(s[0].data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(s[0].label, EventClass::Hail);
        assert_eq!(render_sequences(&s).unwrap(), text);
    }

    #[test]
    fn malformed_row_names_its_line() {
        let text = "sample_id,t,label,f_1\na,0,0,1\na,1,0,oops\n";
        match parse_sequences(text, "x") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_sequences("sample_id,t,label,f_1\na,0,0\n", "x") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shape_problems_are_validation_errors() {
        let cases = [
            "sample_id,t,label,f_1\na,0,0,1\nb,0,0,1\na,1,0,1\n",
            "sample_id,t,label,f_1\na,0,0,1\na,1,2,1\n",
            "sample_id,t,label,f_1\na,0,0,1\na,2,0,1\n",
            "sample_id,t,label,f_1\na,1,0,1\n",
        ];
        for text in cases {
            assert!(matches!(parse_sequences(text, "x"), Err(Error::Validation(_))), "{text}");
        }
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(parse_sequences("id,t,label,f_1\n", "x").is_err());
        assert!(parse_sequences("sample_id,t,label,f_2\n", "x").is_err());
        assert!(parse_sequences("", "x").is_err());
    }
}
