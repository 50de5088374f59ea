//! Independent reference computations built on nalgebra and plain loops.

use delmar::Matrix;
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn to_na(a: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_na(a: &DMatrix<f64>) -> Matrix {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

pub fn seeded_gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    gaussian(rows, cols, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let mut s: Vec<f64> = to_na(a).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Orthonormal columns spanning a random `rows × k` Gaussian, via nalgebra QR.
pub fn random_orthonormal(rows: usize, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let g = to_na(&gaussian(rows, k, rng));
    from_na(&g.qr().q())
}

/// `U·diag(sigma)·Vᵀ` with random orthonormal `U` and `V`.
pub fn with_spectrum(rows: usize, cols: usize, sigma: &[f64], rng: &mut ChaCha8Rng) -> Matrix {
    let k = sigma.len();
    let u = random_orthonormal(rows, k, rng);
    let v = random_orthonormal(cols, k, rng);
    let mut us = u;
    for (j, s) in sigma.iter().enumerate() {
        us.column_mut(j).mapv_inplace(|x| x * s);
    }
    us.dot(&v.t())
}

/// Orthogonal projector onto the column space of `a`, from nalgebra's SVD.
pub fn column_projector(a: &Matrix, rank: usize) -> Matrix {
    let svd = to_na(a).svd(true, false);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let u = svd.u.unwrap();
    let cols: Vec<_> = order[..rank]
        .iter()
        .map(|&j| u.column(j).into_owned())
        .collect();
    let q = DMatrix::from_columns(&cols);
    from_na(&(&q * q.transpose()))
}

/// Minimizes a unimodal `f` on `[lo, hi]` by golden-section search.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > 1e-12 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

pub fn fro(a: &Matrix) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
