//! Seeded synthetic hierarchies with known ground truth.
//!
//! Level `k` features have exactly `ranks[k]` nonzero singular values. The
//! components shared with the next level dominate the ones introduced at
//! level `k` by a factor of 100, so every declared rank boundary carries a
//! clean spectral gap. The deepest features are nonnegative, contiguous,
//! slightly overlapping blocks.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DelmarError, Result};
use crate::linalg::{orthonormal_basis, pseudoinverse, qr_decompose, Matrix};

/// Ratio between the weakest inherited and the strongest new singular value.
pub const SPECTRAL_GAP: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub m: usize,
    pub n: usize,
    /// Strictly decreasing ranks, shallowest first.
    pub ranks: Vec<usize>,
    /// Standard deviation of the dense noise, relative to a signal RMS of 1.
    pub noise_sigma: f64,
    /// Fraction of entries carrying a sparse outlier.
    pub background_density: f64,
    pub background_amplitude: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DelmarError::InvalidSpec(msg));
        if self.ranks.is_empty() {
            return bad("ranks must not be empty".into());
        }
        if self.ranks.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!(
                "ranks must be strictly decreasing, got {:?}",
                self.ranks
            ));
        }
        if *self.ranks.last().unwrap() == 0 {
            return bad("ranks must be positive".into());
        }
        if self.ranks[0] >= self.m.min(self.n) {
            return bad(format!(
                "leading rank {} must be below min(m, n) = {}",
                self.ranks[0],
                self.m.min(self.n)
            ));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return bad(format!(
                "noise_sigma must be nonnegative, got {}",
                self.noise_sigma
            ));
        }
        if !(0.0..1.0).contains(&self.background_density) {
            return bad(format!(
                "background_density must lie in [0, 1), got {}",
                self.background_density
            ));
        }
        if !self.background_amplitude.is_finite() || self.background_amplitude <= 0.0 {
            return bad(format!(
                "background_amplitude must be positive, got {}",
                self.background_amplitude
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Mixing matrices `X₁ … X_L`; `x_true[0]` is `m × ranks[0]`.
    pub x_true: Vec<Matrix>,
    /// Features of every level, with `y_levels[k-1] = X_{k+1}·y_levels[k] + detail`.
    pub y_levels: Vec<Matrix>,
    /// Deepest features, equal to the last entry of `y_levels`.
    pub y_true: Matrix,
    pub z_true: Matrix,
    pub noise: Matrix,
    /// `x_true[0]·y_levels[0] + z_true + noise`
    pub s: Matrix,
}

impl GroundTruth {
    /// The low-rank part of `s`.
    pub fn clean_signal(&self) -> Matrix {
        self.x_true[0].dot(&self.y_levels[0])
    }
}

/// Rows of `ranks` contiguous blocks spread over `n` columns, neighbours
/// overlapping by about a fifth of a block.
pub fn block_features(rank: usize, n: usize, rng: &mut impl Rng) -> Matrix {
    let gaps = (rank - 1) as f64;
    let width = (((n - (rank - 1)) as f64) / (0.8 * gaps + 1.0)).floor() as usize;
    let width = width.max(1);
    let stride = (0.8 * width as f64).ceil() as usize;
    let mut f = Matrix::zeros((rank, n));
    for i in 0..rank {
        let start = (i * stride).min(n - width);
        for j in start..start + width {
            f[[i, j]] = rng.random_range(0.5..1.5);
        }
    }
    f
}

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

fn random_orthogonal(k: usize, rng: &mut impl Rng) -> Result<Matrix> {
    orthonormal_basis(&gaussian(k, k, rng), k)
}

fn scale_columns(a: &Matrix, d: &Array1<f64>) -> Matrix {
    a * &d.view().insert_axis(Axis(0))
}

fn linspace(start: f64, end: f64, len: usize) -> Array1<f64> {
    if len == 1 {
        Array1::from_elem(1, start)
    } else {
        Array1::linspace(start, end, len)
    }
}

pub fn generate(spec: &SynthSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let SynthSpec { m, n, .. } = *spec;
    let ranks = &spec.ranks;
    let depth = ranks.len();
    let r_last = ranks[depth - 1];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let f = block_features(r_last, n, &mut rng);
    let qr = qr_decompose(&f.t().to_owned())?;
    let v = qr.q;
    let r_f = qr.r;
    let extra = gaussian(n, ranks[0] - r_last, &mut rng);
    let mut v_all = qr_decompose(&concatenate![Axis(1), v, extra])?.q;
    v_all.slice_mut(s![.., ..r_last]).assign(&v);

    // Singular values of each level, deepest first.
    let mut sig = linspace(1.0, 0.8, r_last);
    sig[0] = 2.0;
    let mut level_sig = vec![Array1::zeros(0); depth];
    level_sig[depth - 1] = sig.clone();
    for k in (0..depth - 1).rev() {
        let weakest = sig.iter().cloned().fold(f64::INFINITY, f64::min);
        let added = linspace(1.0, 0.9, ranks[k] - ranks[k + 1]) * (weakest / SPECTRAL_GAP);
        sig = concatenate![Axis(0), sig, added];
        level_sig[k] = sig.clone();
    }

    let u = orthonormal_basis(&gaussian(m, ranks[0], &mut rng), ranks[0])?;
    let rotations: Vec<Matrix> = ranks[..depth - 1]
        .iter()
        .map(|&r| random_orthogonal(r, &mut rng))
        .collect::<Result<_>>()?;

    let mut x_true = Vec::with_capacity(depth);
    let mut y_levels = Vec::with_capacity(depth);
    for k in 0..depth {
        let left = if k == 0 {
            u.clone()
        } else {
            rotations[k - 1].slice(s![.., ..ranks[k]]).to_owned()
        };
        if k + 1 < depth {
            x_true.push(left.dot(&rotations[k].t()));
            let basis = v_all.slice(s![.., ..ranks[k]]);
            y_levels.push(scale_columns(&rotations[k], &level_sig[k]).dot(&basis.t()));
        } else {
            let r_inv_t = pseudoinverse(&r_f)?.t().to_owned();
            x_true.push(scale_columns(&left, &level_sig[k]).dot(&r_inv_t));
            y_levels.push(f.clone());
        }
    }

    let clean = x_true[0].dot(&y_levels[0]);
    let rms = (clean.iter().map(|v| v * v).sum::<f64>() / (m * n) as f64).sqrt();
    x_true[0] /= rms;
    let clean = clean / rms;

    let mut z_true = Matrix::zeros((m, n));
    let count = (spec.background_density * (m * n) as f64).round() as usize;
    for idx in sample(&mut rng, m * n, count) {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        z_true[[idx / n, idx % n]] = sign * spec.background_amplitude;
    }

    let normal =
        Normal::new(0.0, spec.noise_sigma).map_err(|e| DelmarError::InvalidSpec(e.to_string()))?;
    let noise = if spec.noise_sigma > 0.0 {
        Array2::from_shape_fn((m, n), |_| normal.sample(&mut rng))
    } else {
        Matrix::zeros((m, n))
    };

    let s = clean + &z_true + &noise;
    let y_true = y_levels[depth - 1].clone();
    Ok(GroundTruth {
        x_true,
        y_levels,
        y_true,
        z_true,
        noise,
        s,
    })
}
