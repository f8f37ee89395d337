//! CSV formats for datasets and label vectors.
//!
//! A dataset file starts with a header line `n,d` for vectors or `n,dissim`
//! for a dissimilarity matrix, followed by one comma-separated row per
//! object. Floats are written in shortest round-trip form (exponent notation
//! for very large or small magnitudes), so a write/read cycle is lossless.
//! Label files have the header `object,label` and list one-based object
//! indices and labels.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::domain::{Assignment, Dataset, Dissimilarities, Vectors};
use crate::error::{AscError, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> AscError {
    AscError::Parse { line, msg: msg.into() }
}

fn write_row<W: Write>(w: &mut W, row: &[f64]) -> Result<()> {
    let mut first = true;
    for x in row {
        if !first {
            w.write_all(b",")?;
        }
        write!(w, "{x:?}")?;
        first = false;
    }
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_dataset<W: Write>(data: &Dataset, mut w: W) -> Result<()> {
    match data {
        Dataset::Vectors(v) => {
            writeln!(w, "{},{}", v.n(), v.d())?;
            for row in v.rows() {
                write_row(&mut w, row)?;
            }
        }
        Dataset::Dissimilarities(d) => {
            writeln!(w, "{},dissim", d.n())?;
            for i in 0..d.n() {
                write_row(&mut w, d.row(i))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Non-blank lines with their one-based line numbers.
fn content_lines<R: Read>(r: R) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            out.push((i + 1, trimmed.to_string()));
        }
    }
    Ok(out)
}

fn parse_usize(field: &str, line: usize, what: &str) -> Result<usize> {
    field.trim().parse().map_err(|_| parse_err(line, format!("{what}: expected a nonnegative integer, found `{}`", field.trim())))
}

fn parse_row(text: &str, line: usize, width: usize) -> Result<Vec<f64>> {
    let row = text
        .split(',')
        .map(|f| f.trim().parse::<f64>().map_err(|_| parse_err(line, format!("expected a number, found `{}`", f.trim()))))
        .collect::<Result<Vec<f64>>>()?;
    if row.len() != width {
        return Err(parse_err(line, format!("expected {width} fields, found {}", row.len())));
    }
    if let Some(x) = row.iter().find(|x| !x.is_finite()) {
        return Err(parse_err(line, format!("non-finite value {x}")));
    }
    Ok(row)
}

pub fn read_dataset<R: Read>(r: R) -> Result<Dataset> {
    let lines = content_lines(r)?;
    let Some((hline, header)) = lines.first() else {
        return Err(parse_err(1, "empty file"));
    };
    let mut parts = header.split(',');
    let (Some(n_field), Some(kind), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(parse_err(*hline, "header must be `n,d` or `n,dissim`"));
    };
    let n = parse_usize(n_field, *hline, "object count")?;
    let body = &lines[1..];
    if body.len() != n {
        let line = body.last().map_or(*hline, |l| l.0);
        return Err(parse_err(line, format!("header announces {n} rows, found {}", body.len())));
    }
    if kind.trim() == "dissim" {
        let mut data = Vec::with_capacity(n * n);
        for (line, text) in body {
            data.extend(parse_row(text, *line, n)?);
        }
        Ok(Dissimilarities::new(n, data).map_err(|e| parse_err(*hline, e.to_string()))?.into())
    } else {
        let d = parse_usize(kind, *hline, "dimension")?;
        let mut data = Vec::with_capacity(n * d);
        for (line, text) in body {
            data.extend(parse_row(text, *line, d)?);
        }
        Ok(Vectors::new(n, d, data).map_err(|e| parse_err(*hline, e.to_string()))?.into())
    }
}

/// Writes zero-based labels in the one-based `object,label` format.
pub fn write_labels<W: Write>(labels: &[usize], mut w: W) -> Result<()> {
    writeln!(w, "object,label")?;
    for (i, l) in labels.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, l + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an `object,label` file back into zero-based labels.
pub fn read_labels<R: Read>(r: R) -> Result<Vec<usize>> {
    let lines = content_lines(r)?;
    match lines.first() {
        Some((_, h)) if h.replace(' ', "") == "object,label" => {}
        Some((line, _)) => return Err(parse_err(*line, "header must be `object,label`")),
        None => return Err(parse_err(1, "empty file")),
    }
    let mut labels = Vec::with_capacity(lines.len() - 1);
    for (expected, (line, text)) in lines[1..].iter().enumerate() {
        let Some((obj, label)) = text.split_once(',') else {
            return Err(parse_err(*line, "expected `object,label`"));
        };
        if parse_usize(obj, *line, "object")? != expected + 1 {
            return Err(parse_err(*line, format!("objects must be listed in order; expected {}", expected + 1)));
        }
        match parse_usize(label, *line, "label")? {
            0 => return Err(parse_err(*line, "labels are one-based")),
            l => labels.push(l - 1),
        }
    }
    Ok(labels)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(File::open(path)?)
}

pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    write_dataset(data, BufWriter::new(File::create(path)?))
}

pub fn load_labels(path: &Path, k: Option<usize>) -> Result<Assignment> {
    let labels = read_labels(File::open(path)?)?;
    let k = k.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    Assignment::new(labels, k)
}

pub fn save_labels(labels: &[usize], path: &Path) -> Result<()> {
    write_labels(labels, BufWriter::new(File::create(path)?))
}
