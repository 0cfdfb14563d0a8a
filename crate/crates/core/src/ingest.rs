//! Reading sample matrices and projection vectors from disk, and writing
//! simulated panels back out.
//!
//! Matrices are headerless CSV with one row per time point and one column
//! per coordinate. A first row that does not parse as numbers is taken as a
//! header and skipped. Vector files hold one value per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};

/// Input data for one run of the tests.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBundle {
    pub samples: Vec<Array2<f64>>,
    pub files: Vec<PathBuf>,
    pub v: Option<Vec<f64>>,
    pub w: Option<Vec<f64>>,
    pub learning_length: Option<usize>,
}

impl DataBundle {
    pub fn k(&self) -> usize {
        self.samples.len()
    }

    /// Common column count.
    pub fn d(&self) -> usize {
        self.samples.first().map_or(0, |s| s.ncols())
    }
}

/// Optional inputs accompanying the sample matrices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BundleOptions {
    /// File with the `v` projection vector.
    pub v: Option<PathBuf>,
    /// File with the `w` projection vector; `v` is used when absent.
    pub w: Option<PathBuf>,
    pub learning_length: Option<usize>,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Ingest {
        file: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn parse_value(path: &Path, line: usize, col: usize, raw: &str) -> Result<f64> {
    match raw.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        Ok(x) => Err(parse_err(path, line, format!("column {}: non-finite value {x}", col + 1))),
        Err(_) => Err(parse_err(path, line, format!("column {}: '{}' is not a number", col + 1, raw.trim()))),
    }
}

/// Reads one sample matrix.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let mut values = Vec::new();
    let mut ncols = None;
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| parse_err(path, line, e.to_string()))?;
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if idx == 0 && record.iter().any(|f| f.trim().parse::<f64>().is_err()) {
            continue;
        }
        match ncols {
            None => ncols = Some(record.len()),
            Some(n) if n != record.len() => {
                return Err(parse_err(path, line, format!("expected {n} columns, found {}", record.len())));
            }
            _ => {}
        }
        for (col, field) in record.iter().enumerate() {
            values.push(parse_value(path, line, col, field)?);
        }
        rows += 1;
    }
    let ncols = ncols.ok_or_else(|| parse_err(path, 1, "no data rows"))?;
    Ok(Array2::from_shape_vec((rows, ncols), values).expect("row lengths checked"))
}

/// Reads a vector stored one value per line; blank lines are ignored.
pub fn read_vector(path: &Path, expected_len: Option<usize>) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|e| io_err(path, e))?;
        if text.trim().is_empty() {
            continue;
        }
        out.push(parse_value(path, line_no, 0, &text)?);
    }
    if let Some(d) = expected_len {
        if out.len() != d {
            return Err(parse_err(
                path,
                out.len(),
                format!("expected {d} values (one per coordinate), found {}", out.len()),
            ));
        }
    }
    Ok(out)
}

/// Loads K sample matrices plus optional projection vectors.
pub fn load_bundle(paths: &[PathBuf], options: &BundleOptions) -> Result<DataBundle> {
    if paths.is_empty() {
        return Err(Error::config("ingest", "samples", "at least one sample file is required"));
    }
    let samples = paths.iter().map(|p| read_matrix(p)).collect::<Result<Vec<_>>>()?;
    let d = samples[0].ncols();
    if let Some((j, s)) = samples.iter().enumerate().find(|(_, s)| s.ncols() != d) {
        return Err(parse_err(
            &paths[j],
            1,
            format!("has {} columns but {} has {d}", s.ncols(), paths[0].display()),
        ));
    }
    let v = options.v.as_deref().map(|p| read_vector(p, Some(d))).transpose()?;
    let w = options.w.as_deref().map(|p| read_vector(p, Some(d))).transpose()?;
    Ok(DataBundle {
        samples,
        files: paths.to_vec(),
        v,
        w,
        learning_length: options.learning_length,
    })
}

/// Writes a matrix as headerless CSV using the shortest decimal form that
/// reads back to the identical `f64`.
pub fn write_matrix_csv(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    write_matrix(&mut out, matrix).map_err(|e| io_err(path, e))?;
    out.flush().map_err(|e| io_err(path, e))
}

fn write_matrix<W: Write>(out: &mut W, matrix: &Array2<f64>) -> std::io::Result<()> {
    for row in matrix.rows() {
        let mut first = true;
        for x in row {
            if !first {
                out.write_all(b",")?;
            }
            first = false;
            write!(out, "{x}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes a vector one value per line.
pub fn write_vector(path: &Path, values: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    for x in values {
        writeln!(out, "{x}").map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}
