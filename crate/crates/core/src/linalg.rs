//! Dense matrix kernels shared by every stage of the decomposition.
//!
//! All routines are pure functions over `ndarray` matrices. Factorizations
//! work on a transposed scratch copy so that the column sweeps of Householder
//! and Jacobi touch contiguous memory.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{DelmarError, Result};

/// Dense real matrix, rows are observations and columns are variables.
pub type Matrix = Array2<f64>;

/// Thin QR factorization `a = q * r`.
#[derive(Debug, Clone)]
pub struct QrResult {
    /// `rows x k` with orthonormal columns, `k = min(rows, cols)`.
    pub q: Matrix,
    /// `k x cols`, upper triangular (trapezoidal when wide) with a
    /// nonnegative diagonal.
    pub r: Matrix,
}

/// Column-pivoted QR: `a[:, permutation] = q * r`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    pub q: Matrix,
    pub r: Matrix,
    /// `permutation[j]` is the column of the input placed at position `j`.
    pub permutation: Vec<usize>,
}

/// Thin singular value decomposition `a = u * diag(s) * vt`, singular values
/// sorted nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Array1<f64>,
    pub vt: Matrix,
}

pub fn ensure_finite(a: &Matrix, context: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DelmarError::NonFiniteInput { context })
    }
}

pub fn ensure_shape(a: &Matrix, expected: (usize, usize), context: &'static str) -> Result<()> {
    if a.dim() == expected {
        Ok(())
    } else {
        Err(DelmarError::ShapeMismatch {
            context,
            expected,
            actual: a.dim(),
        })
    }
}

pub fn frobenius(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn identity(n: usize) -> Matrix {
    Array2::eye(n)
}

/// Householder reflector for `x`: returns the unit vector `v` with
/// `(I - 2 v v^T) x = alpha e_1`, or `None` when `x` is zero.
fn reflector(x: &[f64]) -> Option<(Vec<f64>, f64)> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    let alpha = if x[0] >= 0.0 { -norm } else { norm };
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
    if vnorm == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|t| *t /= vnorm);
    Some((v, alpha))
}

fn apply_reflector(v: &[f64], y: &mut [f64]) {
    let dot: f64 = v.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
    if dot != 0.0 {
        let f = 2.0 * dot;
        y.iter_mut().zip(v).for_each(|(t, vi)| *t -= f * vi);
    }
}

/// Shared Householder driver. `cols` holds the input column-wise (row `j`
/// of `cols` is column `j` of the input).
fn householder(mut cols: Matrix, pivot: bool) -> (Matrix, Matrix, Vec<usize>) {
    let (n, m) = cols.dim();
    let k = m.min(n);
    let mut permutation: Vec<usize> = (0..n).collect();
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(k);

    for j in 0..k {
        if pivot {
            let mut best = j;
            let mut best_norm = -1.0;
            for l in j..n {
                let norm: f64 = cols.slice(s![l, j..]).iter().map(|v| v * v).sum();
                if norm > best_norm {
                    best_norm = norm;
                    best = l;
                }
            }
            if best != j {
                for i in 0..m {
                    cols.swap((j, i), (best, i));
                }
                permutation.swap(j, best);
            }
        }
        let x = cols.slice(s![j, j..]).to_vec();
        match reflector(&x) {
            Some((v, alpha)) => {
                cols[[j, j]] = alpha;
                cols.slice_mut(s![j, j + 1..]).fill(0.0);
                for l in j + 1..n {
                    let mut row = cols.slice_mut(s![l, j..]);
                    apply_reflector(&v, row.as_slice_mut().expect("contiguous row"));
                }
                reflectors.push(Some(v));
            }
            None => reflectors.push(None),
        }
    }

    let mut r = Array2::zeros((k, n));
    for l in 0..n {
        for i in 0..k.min(l + 1) {
            r[[i, l]] = cols[[l, i]];
        }
    }

    // Q is accumulated column-wise: row c of `qt` is column c of Q.
    let mut qt = Array2::zeros((k, m));
    for c in 0..k {
        qt[[c, c]] = 1.0;
    }
    for j in (0..k).rev() {
        if let Some(v) = &reflectors[j] {
            // Columns before j are still unit vectors outside the reflector's span.
            for c in j..k {
                let mut row = qt.slice_mut(s![c, j..]);
                apply_reflector(v, row.as_slice_mut().expect("contiguous row"));
            }
        }
    }

    for i in 0..k {
        if r[[i, i]] < 0.0 {
            r.row_mut(i).mapv_inplace(|v| -v);
            qt.row_mut(i).mapv_inplace(|v| -v);
        }
    }
    (qt.reversed_axes(), r, permutation)
}

fn column_major_copy(a: &Matrix) -> Matrix {
    a.t().as_standard_layout().into_owned()
}

/// Thin Householder QR without pivoting. The diagonal of `r` is made
/// nonnegative by flipping the matching column of `q`.
pub fn qr_decompose(a: &Matrix) -> Result<QrResult> {
    ensure_finite(a, "qr_decompose")?;
    let (q, r, _) = householder(column_major_copy(a), false);
    Ok(QrResult { q, r })
}

/// Householder QR with greedy column pivoting (largest remaining column norm
/// first, lowest index on ties). The diagonal of `r` is nonincreasing in
/// magnitude.
pub fn qr_decompose_pivoted(a: &Matrix) -> Result<PivotedQr> {
    ensure_finite(a, "qr_decompose_pivoted")?;
    let (q, r, permutation) = householder(column_major_copy(a), true);
    Ok(PivotedQr { q, r, permutation })
}

/// First `k` columns of the orthonormal QR factor of `a`.
pub fn orthonormal_basis(a: &Matrix, k: usize) -> Result<Matrix> {
    let qr = qr_decompose(a)?;
    let k = k.min(qr.q.ncols());
    Ok(qr.q.slice(s![.., ..k]).to_owned())
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided Jacobi on the rows of `g` (each row is one column of a tall
/// matrix). Returns the rotated rows and the accumulated orthogonal rotation,
/// stored row-wise.
fn jacobi_rows(mut g: Matrix) -> (Matrix, Matrix) {
    let (n, m) = g.dim();
    let mut v = identity(n);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let gp = g.row(p);
                    let gq = g.row(q);
                    let mut a = 0.0;
                    let mut b = 0.0;
                    let mut c = 0.0;
                    for i in 0..m {
                        a += gp[i] * gp[i];
                        b += gq[i] * gq[i];
                        c += gp[i] * gq[i];
                    }
                    (a, b, c)
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut g, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    (g, v)
}

fn rotate_rows(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let (mut rp, mut rq) = a.multi_slice_mut((s![p, ..], s![q, ..]));
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Thin SVD by one-sided Jacobi rotations on the tall orientation.
pub fn svd(a: &Matrix) -> Result<Svd> {
    ensure_finite(a, "svd")?;
    let (m, n) = a.dim();
    if m < n {
        let t = svd(&a.t().to_owned())?;
        return Ok(Svd {
            u: t.vt.reversed_axes(),
            singular_values: t.singular_values,
            vt: t.u.reversed_axes(),
        });
    }
    let (g, v) = jacobi_rows(column_major_copy(a));
    let norms: Vec<f64> = g.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let mut u = Array2::zeros((m, n));
    let mut vt = Array2::zeros((n, n));
    let mut sv = Array1::zeros(n);
    for (k, &j) in order.iter().enumerate() {
        sv[k] = norms[j];
        if norms[j] > 0.0 {
            u.column_mut(k).assign(&g.row(j).mapv(|x| x / norms[j]));
        }
        vt.row_mut(k).assign(&v.row(j));
    }
    Ok(Svd {
        u,
        singular_values: sv,
        vt,
    })
}

/// Moore-Penrose pseudoinverse. Singular values at or below
/// `max(rows, cols) * eps * sigma_max` are treated as zero.
pub fn pseudoinverse(a: &Matrix) -> Result<Matrix> {
    let (m, n) = a.dim();
    let dec = svd(a)?;
    let smax = dec.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = (m.max(n) as f64) * f64::EPSILON * smax;
    let mut vs = dec.vt.t().to_owned();
    for (k, mut col) in vs.axis_iter_mut(Axis(1)).enumerate() {
        let sigma = dec.singular_values[k];
        let inv = if sigma > cutoff { 1.0 / sigma } else { 0.0 };
        col.mapv_inplace(|v| v * inv);
    }
    Ok(vs.dot(&dec.u.t()))
}

/// Soft-thresholding `sign(a) * max(|a| - tau, 0)`, elementwise.
pub fn shrink(a: &Matrix, tau: f64) -> Result<Matrix> {
    if tau.is_nan() || tau < 0.0 {
        return Err(DelmarError::NegativeThreshold(tau));
    }
    Ok(a.mapv(|v| shrink_scalar(v, tau)))
}

#[inline]
pub(crate) fn shrink_scalar(v: f64, tau: f64) -> f64 {
    // `v - clamp(v, -tau, tau)`, written as selects so it stays branch-free.
    let c = if v < -tau { -tau } else { v };
    let c = if c > tau { tau } else { c };
    v - c
}

/// Splits `a` into nonnegative parts with `a = pos - neg`.
pub fn split_signs(a: &Matrix) -> Result<(Matrix, Matrix)> {
    ensure_finite(a, "split_signs")?;
    Ok((a.mapv(|v| v.max(0.0)), a.mapv(|v| (-v).max(0.0))))
}

/// `[a]^+ = (|a| + a) / 2`
pub fn positive_part(a: &Matrix) -> Matrix {
    a.mapv(|v| v.max(0.0))
}

/// `[a]^- = (|a| - a) / 2`
pub fn negative_part(a: &Matrix) -> Matrix {
    a.mapv(|v| (-v).max(0.0))
}
