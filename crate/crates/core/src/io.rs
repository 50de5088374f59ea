//! Matrix files and run reports.
//!
//! Two matrix formats are supported:
//!
//! * CSV: a `rows,cols` header line followed by `rows` lines of `cols`
//!   comma-separated decimal values.
//! * DMAT: the bytes `DMAT`, then `rows` and `cols` as little-endian `u32`,
//!   then `rows·cols` little-endian `f64` values in row-major order.
//!
//! Reading detects the format from the magic bytes. Writing picks CSV for a
//! `.csv` extension and DMAT otherwise.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::admm::{AdmmConfig, Termination};
use crate::error::{DelmarError, Result};
use crate::linalg::Matrix;
use crate::metrics::SimilarityReport;
use crate::pipeline::DecomposeOptions;

pub const MAGIC: &[u8; 4] = b"DMAT";
const HEADER_LEN: usize = 12;

pub fn encode_dmat(m: &Matrix) -> Result<Vec<u8>> {
    let (rows, cols) = m.dim();
    let too_big = |what: &str, v: usize| {
        DelmarError::DimensionMismatch(format!("{what} {v} does not fit in 32 bits"))
    };
    let r = u32::try_from(rows).map_err(|_| too_big("rows", rows))?;
    let c = u32::try_from(cols).map_err(|_| too_big("cols", cols))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * rows * cols);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&r.to_le_bytes());
    out.extend_from_slice(&c.to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_dmat(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(DelmarError::MalformedHeader("missing DMAT header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(4), word(8));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| DelmarError::DimensionMismatch(format!("{rows}x{cols} is too large")))?;
    if bytes.len() != expected {
        return Err(DelmarError::DimensionMismatch(format!(
            "{rows}x{cols} needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for (k, chunk) in bytes[HEADER_LEN..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(DelmarError::NonFiniteValue {
                row: k / cols,
                col: k % cols,
            });
        }
        values.push(v);
    }
    Ok(Matrix::from_shape_vec((rows, cols), values).expect("length checked above"))
}

/// Shortest text that parses back to the same `f64`.
fn format_value(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn encode_csv(m: &Matrix) -> String {
    let mut out = format!("{},{}\n", m.nrows(), m.ncols());
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn decode_csv(text: &str) -> Result<Matrix> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| DelmarError::MalformedHeader("empty input".into()))?;
    let dims: Vec<&str> = header.split(',').map(str::trim).collect();
    let parse_dim = |s: &str| {
        s.parse::<usize>().map_err(|_| {
            DelmarError::MalformedHeader(format!("expected \"rows,cols\", got {header:?}"))
        })
    };
    if dims.len() != 2 {
        return Err(DelmarError::MalformedHeader(format!(
            "expected \"rows,cols\", got {header:?}"
        )));
    }
    let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    if cols == 0 {
        return Ok(Matrix::zeros((rows, 0)));
    }

    let body: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
    if body.len() != rows {
        return Err(DelmarError::DimensionMismatch(format!(
            "header declares {rows} rows, found {}",
            body.len()
        )));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for (i, line) in body.iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(DelmarError::DimensionMismatch(format!(
                "row {i} has {} values, header declares {cols}",
                fields.len()
            )));
        }
        for (j, field) in fields.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| DelmarError::MalformedValue { row: i, col: j })?;
            if !v.is_finite() {
                return Err(DelmarError::NonFiniteValue { row: i, col: j });
            }
            values.push(v);
        }
    }
    Ok(Matrix::from_shape_vec((rows, cols), values).expect("length checked above"))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        decode_dmat(&bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| DelmarError::MalformedHeader("neither DMAT nor UTF-8 text".into()))?;
        decode_csv(&text)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let path = path.as_ref();
    if is_csv(path) {
        fs::write(path, encode_csv(m))?;
    } else {
        fs::write(path, encode_dmat(m)?)?;
    }
    Ok(())
}

/// `sha256:` followed by the hex digest of the DMAT encoding.
pub fn matrix_digest(m: &Matrix) -> Result<String> {
    let digest = Sha256::digest(encode_dmat(m)?);
    Ok(format!("sha256:{}", hex::encode(digest)))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WallTimes {
    pub forward_ms: f64,
    pub mbp_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub input_digest: String,
    pub input_shape: (usize, usize),
    pub config: AdmmConfig,
    pub options: DecomposeOptions,
    pub depth: usize,
    pub ranks: Vec<usize>,
    /// Final relative residual of each layer's solver.
    pub per_layer_residuals: Vec<f64>,
    pub iterations: Vec<usize>,
    pub terminations: Vec<Termination>,
    /// Relative error of `X₁…X_k·Y_k + Z₁` against the input, per layer.
    pub reconstruction_errors: Vec<f64>,
    pub mbp_applied: bool,
    pub metrics: Option<SimilarityReport>,
    pub wall_time_ms: WallTimes,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| DelmarError::MalformedReport(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| DelmarError::MalformedReport(e.to_string()))
    }

    /// The same report with timing fields zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        RunReport {
            wall_time_ms: WallTimes::default(),
            ..self.clone()
        }
    }
}
