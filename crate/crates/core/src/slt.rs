//! The SLT text format for labeled streamline sets.
//!
//! ```text
//! SLT 1
//! count <N>
//! streamline <id> <label-or-minus> <num_points>
//! <x> <y> <z>
//! ...
//! ```
//!
//! Coordinates are written with 17 significant digits, so a write/parse
//! round trip reproduces every `f64` exactly.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::streamline::{Point3, Streamline, StreamlineSet};

const MAGIC: &str = "SLT";
const VERSION: &str = "1";

/// Formats a float with 17 significant digits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_streamline_file(path: impl AsRef<Path>) -> Result<StreamlineSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_slt(&text, path.display().to_string())
}

pub fn write_streamline_file(set: &StreamlineSet, path: impl AsRef<Path>) -> Result<()> {
    let text = format_slt(set)?;
    write_atomic(path.as_ref(), text.as_bytes())
}

pub fn format_slt(set: &StreamlineSet) -> Result<String> {
    set.validate()?;
    let mut out = String::new();
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    writeln!(out, "count {}", set.streamlines.len()).unwrap();
    for s in &set.streamlines {
        let label = match s.label.as_deref() {
            None => "-",
            Some(l) if l.is_empty() || l == "-" || l.chars().any(char::is_whitespace) => {
                return Err(Error::InvalidStreamline {
                    id: s.id,
                    reason: format!("label `{l}` cannot be stored in SLT"),
                });
            }
            Some(l) => l,
        };
        writeln!(out, "streamline {} {} {}", s.id, label, s.points.len()).unwrap();
        for p in &s.points {
            writeln!(out, "{} {} {}", fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.z)).unwrap();
        }
    }
    Ok(out)
}

pub fn parse_slt(text: &str, source: impl Into<String>) -> Result<StreamlineSet> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    match lines.next() {
        Some((_, l)) if l.split_whitespace().collect::<Vec<_>>() == [MAGIC, VERSION] => {}
        Some((n, l)) => return Err(Error::parse(n, format!("malformed header `{l}`"))),
        None => return Err(Error::parse(1, "malformed header: empty file")),
    }

    let declared = match lines.next() {
        Some((n, l)) => {
            let tok: Vec<_> = l.split_whitespace().collect();
            match tok.as_slice() {
                ["count", c] => c
                    .parse::<usize>()
                    .map_err(|_| Error::parse(n, format!("malformed count `{c}`")))?,
                _ => return Err(Error::parse(n, format!("malformed header, expected `count <N>`: `{l}`"))),
            }
        }
        None => return Err(Error::parse(2, "malformed header: missing count line")),
    };

    let mut streamlines = Vec::with_capacity(declared);
    let mut ids = HashSet::with_capacity(declared);
    let mut last_line = 2;

    while let Some((n, l)) = lines.next() {
        last_line = n;
        let tok: Vec<_> = l.split_whitespace().collect();
        let (id, label, count) = match tok.as_slice() {
            ["streamline", id, label, count] => {
                let id = id
                    .parse::<u64>()
                    .map_err(|_| Error::parse(n, format!("malformed streamline id `{id}`")))?;
                let count = count
                    .parse::<usize>()
                    .map_err(|_| Error::parse(n, format!("malformed point count `{count}`")))?;
                let label = (*label != "-").then(|| label.to_string());
                (id, label, count)
            }
            _ => return Err(Error::parse(n, format!("expected `streamline <id> <label> <points>`, got `{l}`"))),
        };
        if count < 2 {
            return Err(Error::parse(n, format!("streamline {id} has {count} points, needs at least 2")));
        }
        if !ids.insert(id) {
            return Err(Error::parse(n, format!("duplicate streamline id {id}")));
        }

        let mut points = Vec::with_capacity(count);
        for _ in 0..count {
            let Some((pn, pl)) = lines.next() else {
                return Err(Error::parse(
                    last_line + 1,
                    format!("point-count mismatch: streamline {id} declares {count}, found {}", points.len()),
                ));
            };
            last_line = pn;
            points.push(parse_point(pn, pl, id, count, points.len())?);
        }
        streamlines.push(Streamline { id, points, label });
    }

    if streamlines.len() != declared {
        return Err(Error::parse(
            last_line,
            format!(
                "streamline count mismatch: header declares {declared}, found {}",
                streamlines.len()
            ),
        ));
    }

    Ok(StreamlineSet {
        streamlines,
        source: source.into(),
    })
}

fn parse_point(line: usize, text: &str, id: u64, declared: usize, found: usize) -> Result<Point3> {
    let tok: Vec<_> = text.split_whitespace().collect();
    if tok.len() != 3 || tok[0] == "streamline" {
        return Err(Error::parse(
            line,
            format!("point-count mismatch: streamline {id} declares {declared}, found {found}"),
        ));
    }
    let mut xyz = [0.0; 3];
    for (v, t) in xyz.iter_mut().zip(&tok) {
        *v = t
            .parse::<f64>()
            .map_err(|_| Error::parse(line, format!("malformed coordinate `{t}`")))?;
        if !v.is_finite() {
            return Err(Error::parse(line, format!("non-finite coordinate `{t}`")));
        }
    }
    Ok(Point3::from_array(xyz))
}
