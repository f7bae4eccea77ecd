//! Artifact serialization: field CSV files, residual-history CSV, and
//! binary PGM heatmaps.
//!
//! Fields are written in plain text with Rust's shortest round-trip float
//! formatting, so reading a file back yields bitwise-equal values. Heatmaps
//! are 8-bit binary PGM (P5), min-max normalized per slice; identical input
//! produces bitwise-identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::grid::Grid;
use crate::pdhg::HistoryRow;
use crate::{Error, Result};

/// Grid metadata stored in a field file's header line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldMeta {
    pub n_x1: usize,
    pub n_x2: usize,
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
}

impl FieldMeta {
    pub fn of(grid: &Grid) -> Self {
        FieldMeta {
            n_x1: grid.n_x1,
            n_x2: grid.n_x2,
            x1_min: grid.x1_min,
            x1_max: grid.x1_max,
            x2_min: grid.x2_min,
            x2_max: grid.x2_max,
        }
    }
}

/// Writes one spatial slice as CSV: a `#`-prefixed metadata header, then one
/// row per x1 index with comma-separated values over x2.
pub fn write_field_csv(path: &Path, field: ArrayView2<'_, f64>, grid: &Grid) -> Result<()> {
    assert_eq!(field.dim(), (grid.n_x1, grid.n_x2));
    let mut text = String::new();
    let meta = FieldMeta::of(grid);
    let _ = writeln!(
        text,
        "# nx1={} nx2={} x1_min={} x1_max={} x2_min={} x2_max={}",
        meta.n_x1, meta.n_x2, meta.x1_min, meta.x1_max, meta.x2_min, meta.x2_max
    );
    for i in 0..grid.n_x1 {
        for j in 0..grid.n_x2 {
            if j > 0 {
                text.push(',');
            }
            let _ = write!(text, "{}", field[[i, j]]);
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Reads a field file written by [`write_field_csv`].
pub fn read_field_csv(path: &Path) -> Result<(Array2<f64>, FieldMeta)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty field file", path.display())))?;
    let header = header
        .strip_prefix("# ")
        .ok_or_else(|| Error::Config(format!("{}: missing metadata header", path.display())))?;
    let mut meta = FieldMeta { n_x1: 0, n_x2: 0, x1_min: 0.0, x1_max: 0.0, x2_min: 0.0, x2_max: 0.0 };
    for pair in header.split_whitespace() {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            Error::Config(format!("{}: malformed header entry '{pair}'", path.display()))
        })?;
        let parse_err =
            || Error::Config(format!("{}: bad value for '{key}'", path.display()));
        match key {
            "nx1" => meta.n_x1 = value.parse().map_err(|_| parse_err())?,
            "nx2" => meta.n_x2 = value.parse().map_err(|_| parse_err())?,
            "x1_min" => meta.x1_min = value.parse().map_err(|_| parse_err())?,
            "x1_max" => meta.x1_max = value.parse().map_err(|_| parse_err())?,
            "x2_min" => meta.x2_min = value.parse().map_err(|_| parse_err())?,
            "x2_max" => meta.x2_max = value.parse().map_err(|_| parse_err())?,
            other => {
                return Err(Error::Config(format!(
                    "{}: unknown header key '{other}'",
                    path.display()
                )))
            }
        }
    }
    if meta.n_x1 == 0 || meta.n_x2 == 0 {
        return Err(Error::Config(format!(
            "{}: header must set nx1 and nx2",
            path.display()
        )));
    }
    let mut values = Array2::zeros((meta.n_x1, meta.n_x2));
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        if i >= meta.n_x1 {
            return Err(Error::Config(format!(
                "{}: more rows than nx1={}",
                path.display(),
                meta.n_x1
            )));
        }
        let mut cols = 0;
        for (j, cell) in line.split(',').enumerate() {
            if j >= meta.n_x2 {
                return Err(Error::Config(format!(
                    "{}: row {i} has more than nx2={} columns",
                    path.display(),
                    meta.n_x2
                )));
            }
            values[[i, j]] = cell.parse().map_err(|_| {
                Error::Config(format!("{}: bad number '{cell}' at row {i}", path.display()))
            })?;
            cols += 1;
        }
        if cols != meta.n_x2 {
            return Err(Error::Config(format!(
                "{}: row {i} has {cols} columns, expected {}",
                path.display(),
                meta.n_x2
            )));
        }
        rows += 1;
    }
    if rows != meta.n_x1 {
        return Err(Error::Config(format!(
            "{}: {rows} rows, expected nx1={}",
            path.display(),
            meta.n_x1
        )));
    }
    Ok((values, meta))
}

/// Writes the residual history with one row per recorded iteration.
pub fn write_residuals_csv(path: &Path, history: &[HistoryRow]) -> Result<()> {
    let mut text = String::from("iteration,continuity,a_fixedpoint,complementarity,objective\n");
    for row in history {
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            row.iteration, row.continuity, row.a_fixedpoint, row.complementarity, row.objective
        );
    }
    fs::write(path, text)?;
    Ok(())
}

/// Min and max used to normalize one heatmap; recorded in run summaries.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PgmNormalization {
    pub min: f64,
    pub max: f64,
}

/// Writes an 8-bit binary PGM (P5) heatmap of the field.
///
/// Pixel rows run top to bottom with decreasing x2 (row 0 is the largest x2
/// index), columns left to right with increasing x1. Values map linearly to
/// 0..=255 between the slice minimum and maximum; a constant slice maps to
/// mid gray (128). A non-finite value is an error and no file is written.
pub fn write_pgm(path: &Path, field: ArrayView2<'_, f64>) -> Result<PgmNormalization> {
    let (n1, n2) = field.dim();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in field.iter() {
        if !v.is_finite() {
            return Err(Error::Config(
                "heatmap field contains a non-finite value".into(),
            ));
        }
        min = min.min(v);
        max = max.max(v);
    }
    let mut bytes = Vec::with_capacity(32 + n1 * n2);
    bytes.extend_from_slice(format!("P5\n{n1} {n2}\n255\n").as_bytes());
    let span = max - min;
    for j_img in 0..n2 {
        let j = n2 - 1 - j_img;
        for i in 0..n1 {
            let pixel = if span == 0.0 {
                128u8
            } else {
                ((field[[i, j]] - min) / span * 255.0).round() as u8
            };
            bytes.push(pixel);
        }
    }
    fs::write(path, bytes)?;
    Ok(PgmNormalization { min, max })
}
