//! Long-format panel files: a header `id,t,value` followed by one row per
//! observation, each id's rows contiguous and `t` strictly increasing.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::TimeSeries;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn read_panel_from<R: Read>(reader: R) -> Result<Vec<TimeSeries>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names != ["id", "t", "value"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `id,t,value`, found `{}`", names.join(",")),
        });
    }
    let mut out: Vec<TimeSeries> = Vec::new();
    let mut current: Option<(String, Vec<f64>, i64)> = None;
    let mut seen = std::collections::HashSet::new();
    let finish = |cur: Option<(String, Vec<f64>, i64)>, out: &mut Vec<TimeSeries>| -> Result<()> {
        if let Some((id, values, _)) = cur {
            out.push(TimeSeries::new(id, values)?);
        }
        Ok(())
    };
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| Error::Parse { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse = |message: String| Error::Parse { line, message };
        if rec.len() != 3 {
            return Err(parse(format!("expected 3 fields, found {}", rec.len())));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(parse("empty id".into()));
        }
        let t: i64 = rec[1].parse().map_err(|_| parse(format!("time index `{}` is not an integer", &rec[1])))?;
        let value: f64 = rec[2].parse().map_err(|_| parse(format!("value `{}` is not a number", &rec[2])))?;
        if !value.is_finite() {
            return Err(parse(format!("value `{}` is not finite", &rec[2])));
        }
        match current.as_mut() {
            Some((cur, values, last_t)) if *cur == id => {
                if t <= *last_t {
                    return Err(parse(format!("time index {t} for `{id}` does not increase (previous {last_t})")));
                }
                values.push(value);
                *last_t = t;
            }
            _ => {
                if !seen.insert(id.clone()) {
                    return Err(parse(format!("rows for `{id}` are not contiguous")));
                }
                finish(current.take(), &mut out)?;
                current = Some((id, vec![value], t));
            }
        }
    }
    finish(current, &mut out)?;
    if out.is_empty() {
        return Err(Error::Parse { line: 1, message: "panel has no rows".into() });
    }
    Ok(out)
}

pub fn read_panel(path: &Path) -> Result<Vec<TimeSeries>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_panel_from(file)
}

/// Writes `t = 1..=n` for every series. Values use the shortest representation that parses back exactly.
pub fn write_panel_to<W: Write>(writer: W, panel: &[TimeSeries]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(["id", "t", "value"])?;
    for s in panel {
        for (t, v) in s.values.iter().enumerate() {
            w.write_record([s.id.as_str(), &(t + 1).to_string(), &v.to_string()])?;
        }
    }
    w.flush()
}

pub fn write_panel(path: &Path, panel: &[TimeSeries]) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_panel_to(std::io::BufWriter::new(file), panel).map_err(|e| io_err(path, e))
}

/// `id,group` rows with 1-based groups.
pub fn write_labels_to<W: Write>(writer: W, ids: &[String], labels: &[usize]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(["id", "group"])?;
    for (id, g) in ids.iter().zip(labels) {
        w.write_record([id.as_str(), &(g + 1).to_string()])?;
    }
    w.flush()
}

/// Reads `id,group` rows (1-based groups) and orders them to match `ids`.
pub fn read_labels_from<R: Read>(reader: R, ids: &[String]) -> Result<Vec<usize>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut map = std::collections::HashMap::new();
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| Error::Parse { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(Error::Parse { line, message: format!("expected 2 fields, found {}", rec.len()) });
        }
        let g: usize = rec[1]
            .parse()
            .ok()
            .filter(|&g| g >= 1)
            .ok_or_else(|| Error::Parse { line, message: format!("group `{}` is not a positive integer", &rec[1]) })?;
        if map.insert(rec[0].to_string(), g - 1).is_some() {
            return Err(Error::Parse { line, message: format!("duplicate id `{}`", &rec[0]) });
        }
    }
    ids.iter().map(|id| map.get(id).copied().ok_or_else(|| Error::Config(format!("no label for `{id}`")))).collect()
}
