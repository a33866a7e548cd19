//! File formats.
//!
//! Matrices travel in a plain text format:
//!
//! ```text
//! covsketch-matrix v1 <rows> <cols>
//! <row 0, whitespace-separated entries>
//! ...
//! ```
//!
//! Entries are written with Rust's shortest round-trip float formatting, so a
//! write/read cycle reproduces every `f64` bit-exactly. Ensembles,
//! measurements, and recovery outputs carry small JSON sidecars next to their
//! data files.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &str = "covsketch-matrix";
const VERSION: &str = "v1";

/// Renders a matrix in the `covsketch-matrix v1` text format.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION} {} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

/// Parses the `covsketch-matrix v1` text format.
pub fn parse_matrix(text: &str, origin: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(origin, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != MAGIC || fields[1] != VERSION {
        return Err(Error::format(
            origin,
            format!("bad header {header:?}, expected `{MAGIC} {VERSION} <rows> <cols>`"),
        ));
    }
    let rows: usize = fields[2]
        .parse()
        .map_err(|_| Error::format(origin, "bad row count"))?;
    let cols: usize = fields[3]
        .parse()
        .map_err(|_| Error::format(origin, "bad column count"))?;

    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        if i >= rows {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::format(origin, "trailing content after last row"));
        }
        let mut count = 0;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::format(origin, format!("bad entry {tok:?} in row {i}")))?;
            data.push(v);
            count += 1;
        }
        if count != cols {
            return Err(Error::format(
                origin,
                format!("row {i} has {count} entries, expected {cols}"),
            ));
        }
    }
    if data.len() != rows * cols {
        return Err(Error::format(
            origin,
            format!("expected {rows} rows, found {}", data.len() / cols.max(1)),
        ));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Writes a matrix file.
pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(format_matrix(m).as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Reads a matrix file.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_matrix(&text, &path.display().to_string())
}

/// Sidecar metadata stored next to an ensemble's matrix files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSidecar {
    pub m: usize,
    pub n: usize,
    pub l: usize,
    pub seed: Option<u64>,
    pub family: String,
}

/// Sidecar metadata stored next to a measurement CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementSidecar {
    pub epsilon: f64,
    pub policy: String,
    pub seed: Option<u64>,
}

/// Writes a JSON sidecar.
pub fn write_sidecar<T: Serialize>(path: impl AsRef<Path>, sidecar: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(sidecar)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Reads a JSON sidecar.
pub fn read_sidecar<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Renders a measurement vector as CSV with columns
/// `sketch_index,y,t_per_sketch`.
pub fn format_measurements_csv(y: &DVector<f64>, t_per_sketch: usize) -> String {
    let mut out = String::from("sketch_index,y,t_per_sketch\n");
    for (i, v) in y.iter().enumerate() {
        let _ = writeln!(out, "{i},{v},{t_per_sketch}");
    }
    out
}

/// Parses a measurement CSV written by [`format_measurements_csv`].
/// Returns the measurement vector and the per-sketch averaging count.
pub fn parse_measurements_csv(text: &str, origin: &str) -> Result<(DVector<f64>, usize)> {
    let mut lines = text.lines();
    match lines.next() {
        Some("sketch_index,y,t_per_sketch") => {}
        other => {
            return Err(Error::format(
                origin,
                format!("bad measurement header {other:?}"),
            ))
        }
    }
    let mut y = Vec::new();
    let mut t = 0usize;
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::format(origin, format!("bad row {row}: {line:?}")));
        }
        let idx: usize = cols[0]
            .parse()
            .map_err(|_| Error::format(origin, format!("bad sketch index in row {row}")))?;
        if idx != row {
            return Err(Error::format(
                origin,
                format!("sketch index {idx} out of order in row {row}"),
            ));
        }
        let v: f64 = cols[1]
            .parse()
            .map_err(|_| Error::format(origin, format!("bad value in row {row}")))?;
        t = cols[2]
            .parse()
            .map_err(|_| Error::format(origin, format!("bad count in row {row}")))?;
        y.push(v);
    }
    if y.is_empty() {
        return Err(Error::format(origin, "no measurement rows"));
    }
    Ok((DVector::from_vec(y), t))
}

/// Writes a measurement CSV file.
pub fn write_measurements_csv(
    path: impl AsRef<Path>,
    y: &DVector<f64>,
    t_per_sketch: usize,
) -> Result<()> {
    fs::write(path, format_measurements_csv(y, t_per_sketch))?;
    Ok(())
}

/// Reads a measurement CSV file.
pub fn read_measurements_csv(path: impl AsRef<Path>) -> Result<(DVector<f64>, usize)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_measurements_csv(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_rejected_when_malformed() {
        assert!(parse_matrix("covsketch-matrix v2 1 1\n0\n", "t").is_err());
        assert!(parse_matrix("1 1\n0\n", "t").is_err());
        assert!(parse_matrix("", "t").is_err());
    }

    #[test]
    fn ragged_rows_rejected() {
        let text = "covsketch-matrix v1 2 2\n1 2\n3\n";
        assert!(parse_matrix(text, "t").is_err());
    }

    #[test]
    fn measurements_round_trip() {
        let y = DVector::from_vec(vec![1.5, -2.25, 1e-17, 3.0]);
        let text = format_measurements_csv(&y, 250);
        let (back, t) = parse_measurements_csv(&text, "t").unwrap();
        assert_eq!(t, 250);
        assert_eq!(y, back);
    }

    proptest! {
        #[test]
        fn matrix_round_trip_is_exact(
            rows in 1usize..6,
            cols in 1usize..6,
            scale in -300i32..300,
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = crate::rng::rng_from_seed(seed);
            let factor = 2f64.powi(scale);
            let m = DMatrix::from_fn(rows, cols, |_, _| {
                (rng.random::<f64>() - 0.5) * factor
            });
            let text = format_matrix(&m);
            let back = parse_matrix(&text, "prop").unwrap();
            prop_assert_eq!(m.nrows(), back.nrows());
            prop_assert_eq!(m.ncols(), back.ncols());
            for (a, b) in m.iter().zip(back.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
