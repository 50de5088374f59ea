//! Rank reduction operator.
//!
//! The effective rank of a feature matrix is read off the magnitudes of the
//! diagonal of its QR factor: a sharp drop between consecutive entries marks
//! the cutoff. Two detectors locate the drop, a weighted difference (drop
//! relative to the running total) and a weighted ratio (normalized
//! consecutive quotients); the larger of their argmax positions wins.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::error::{DelmarError, Result};
use crate::linalg::{qr_decompose_pivoted, Matrix};

/// Lower clamp applied to the QR diagonal before any ratio is formed.
pub const DIAG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDecision {
    pub estimated_rank: usize,
    pub wd: Vec<f64>,
    pub wr: Vec<f64>,
    pub diag_abs: Vec<f64>,
    /// Zero-based argmax of `wd`.
    pub wd_argmax: usize,
    /// Zero-based argmax of `wr`.
    pub wr_argmax: usize,
}

/// `out[i] = (d[i] - d[i+1]) / (d[0] + ... + d[i])`
pub fn weighted_difference(d: &[f64]) -> Result<Vec<f64>> {
    if d.len() < 2 {
        return Err(DelmarError::VectorTooShort(d.len()));
    }
    let mut out = Vec::with_capacity(d.len() - 1);
    let mut cumsum = 0.0;
    for i in 0..d.len() - 1 {
        cumsum += d[i];
        if cumsum == 0.0 {
            return Err(DelmarError::ZeroPrefix(i));
        }
        out.push((d[i] - d[i + 1]) / cumsum);
    }
    Ok(out)
}

/// Consecutive ratios `d[i] / d[i+1]`, rescaled by `(L - 2) / sum(ratios)`.
/// For `L = 2` the scale factor is 1.
pub fn weighted_ratio(d: &[f64]) -> Result<Vec<f64>> {
    let len = d.len();
    if len < 2 {
        return Err(DelmarError::VectorTooShort(len));
    }
    let mut ratios = Vec::with_capacity(len - 1);
    for i in 0..len - 1 {
        if d[i + 1] == 0.0 {
            return Err(DelmarError::DivisionByZero(i + 1));
        }
        ratios.push(d[i] / d[i + 1]);
    }
    let total: f64 = ratios.iter().sum();
    let scale = if len > 2 { (len - 2) as f64 } else { 1.0 };
    Ok(ratios.into_iter().map(|r| scale * r / total).collect())
}

fn first_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn tall(y: &Matrix) -> Matrix {
    if y.nrows() >= y.ncols() {
        y.clone()
    } else {
        y.t().to_owned()
    }
}

/// Estimates the effective rank of `y`. The result always lies in
/// `1..min(rows, cols)`.
pub fn estimate_rank(y: &Matrix) -> Result<RankDecision> {
    Ok(estimate_with_pivots(y)?.0)
}

fn estimate_with_pivots(y: &Matrix) -> Result<(RankDecision, Vec<usize>)> {
    let (rows, cols) = y.dim();
    let min_dim = rows.min(cols);
    if min_dim < 2 {
        return Err(DelmarError::MatrixTooSmall { rows, cols });
    }
    let qr = qr_decompose_pivoted(&tall(y))?;
    let diag_abs: Vec<f64> = (0..min_dim)
        .map(|i| qr.r[[i, i]].abs().max(DIAG_CLAMP))
        .collect();
    let wd = weighted_difference(&diag_abs)?;
    let wr = weighted_ratio(&diag_abs)?;
    let wd_argmax = first_argmax(&wd);
    let wr_argmax = first_argmax(&wr);

    let candidate = (wd_argmax + 1).max(wr_argmax + 1);
    let estimated_rank = if candidate == min_dim {
        candidate - 1
    } else {
        candidate
    }
    .max(1);

    Ok((
        RankDecision {
            estimated_rank,
            wd,
            wr,
            diag_abs,
            wd_argmax,
            wr_argmax,
        },
        qr.permutation,
    ))
}

/// Applies the rank estimator up to `steps` times. After each step the
/// matrix keeps only its leading components along the shorter dimension,
/// chosen in pivot order. Stops early once the estimate reaches 1.
pub fn rro_reduce(y: &Matrix, steps: usize) -> Result<Vec<RankDecision>> {
    if steps == 0 {
        return Err(DelmarError::InvalidConfig(
            "rro_reduce needs at least one step".into(),
        ));
    }
    let mut current = y.clone();
    let mut decisions = Vec::new();
    for _ in 0..steps {
        let (decision, pivots) = estimate_with_pivots(&current)?;
        let rank = decision.estimated_rank;
        decisions.push(decision);
        if rank <= 1 {
            break;
        }
        let keep = &pivots[..rank];
        current = if current.nrows() <= current.ncols() {
            current.select(Axis(0), keep)
        } else {
            current.select(Axis(1), keep)
        };
    }
    Ok(decisions)
}
