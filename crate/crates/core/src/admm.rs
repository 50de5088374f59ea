//! Single-layer ADMM solver for the low-rank plus sparse split
//! `target ≈ X·Y + Z`.
//!
//! Each outer iteration updates `X`, then `Y`, then the sparse background
//! `Z`, then the multiplier `e`. Two update modes are available: `Exact`
//! solves the `X`/`Y` subproblems through pseudoinverses, `Accelerated`
//! replaces them with an orthogonal projection built from a thin QR.

use ndarray::{Array2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DelmarError, Result};
use crate::linalg::{
    ensure_finite, frobenius, identity, orthonormal_basis, pseudoinverse, qr_decompose, shrink,
    shrink_scalar, svd, Matrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    Exact,
    Accelerated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    /// Penalty parameter, must exceed 1.
    pub beta: f64,
    /// Multiplier step length, at least 1.
    pub eta: f64,
    pub max_iter: usize,
    /// Stop once the relative primal residual drops to this value.
    pub tol: f64,
    pub mode: UpdateMode,
    pub seed: u64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            beta: 10.0,
            eta: 1.6,
            max_iter: 500,
            tol: 1e-5,
            mode: UpdateMode::Accelerated,
            seed: 0,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || self.beta <= 1.0 {
            return Err(DelmarError::InvalidConfig(format!(
                "beta must be a finite value > 1, got {}",
                self.beta
            )));
        }
        if !self.eta.is_finite() || self.eta < 1.0 {
            return Err(DelmarError::InvalidConfig(format!(
                "eta must be a finite value >= 1, got {}",
                self.eta
            )));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(DelmarError::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(DelmarError::InvalidConfig(
                "max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One layer of the factorization: `x` is `m × h`, `y` is `h × n`, and the
/// background `z` and multiplier `e` share the target's `m × n` shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFactor {
    pub x: Matrix,
    pub y: Matrix,
    pub z: Matrix,
    pub e: Matrix,
    /// One-based depth of this layer.
    pub layer_index: usize,
}

impl LayerFactor {
    pub fn rank(&self) -> usize {
        self.x.ncols()
    }

    fn check(&self, target: &Matrix) -> Result<()> {
        let (m, n) = target.dim();
        let h = self.x.ncols();
        let mismatch = |context, expected, actual| {
            Err(DelmarError::ShapeMismatch {
                context,
                expected,
                actual,
            })
        };
        if self.x.nrows() != m {
            return mismatch("layer factor x", (m, h), self.x.dim());
        }
        if self.y.dim() != (h, n) {
            return mismatch("layer factor y", (h, n), self.y.dim());
        }
        if self.z.dim() != (m, n) {
            return mismatch("layer factor z", (m, n), self.z.dim());
        }
        if self.e.dim() != (m, n) {
            return mismatch("layer factor e", (m, n), self.e.dim());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Tolerance,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub iterations: usize,
    /// `‖XY + Z − S‖ / ‖S‖` after each iteration.
    pub primal_residuals: Vec<f64>,
    pub lagrangian_values: Vec<f64>,
    pub termination: Termination,
}

impl ConvergenceTrace {
    pub fn final_residual(&self) -> f64 {
        self.primal_residuals.last().copied().unwrap_or(f64::NAN)
    }
}

/// `(β/2)‖XY − S‖² + ⟨XY − S, e⟩ + (1/β)‖Z‖₁`
pub fn evaluate_lagrangian(target: &Matrix, f: &LayerFactor, beta: f64) -> Result<f64> {
    f.check(target)?;
    let xy = f.x.dot(&f.y);
    let mut quad = 0.0;
    let mut inner = 0.0;
    Zip::from(&xy).and(target).and(&f.e).for_each(|&p, &s, &e| {
        let d = p - s;
        quad += d * d;
        inner += d * e;
    });
    let l1: f64 = f.z.iter().map(|v| v.abs()).sum();
    Ok(0.5 * beta * quad + inner + l1 / beta)
}

/// `S − Z − e/β`, the target seen by the `X` and `Y` subproblems.
fn effective_target(target: &Matrix, f: &LayerFactor, beta: f64) -> Matrix {
    let mut a = target.clone();
    Zip::from(&mut a)
        .and(&f.z)
        .and(&f.e)
        .for_each(|a, &z, &e| *a -= z + e / beta);
    a
}

/// `(S − Z − e/β)·Y†`
pub fn update_x_exact(target: &Matrix, f: &LayerFactor, beta: f64) -> Result<Matrix> {
    f.check(target)?;
    Ok(effective_target(target, f, beta).dot(&pseudoinverse(&f.y)?))
}

/// `X†·(S − Z − e/β)`
pub fn update_y_exact(target: &Matrix, f: &LayerFactor, beta: f64) -> Result<Matrix> {
    f.check(target)?;
    Ok(pseudoinverse(&f.x)?.dot(&effective_target(target, f, beta)))
}

/// Orthonormal basis of `(S − Z − e/β)·Yᵀ`, `h` columns wide.
pub fn update_x_accelerated(target: &Matrix, f: &LayerFactor, beta: f64) -> Result<Matrix> {
    f.check(target)?;
    let a = effective_target(target, f, beta).dot(&f.y.t());
    orthonormal_basis(&a, f.rank())
}

const ORTHONORMAL_TOL: f64 = 1e-8;

fn is_orthonormal(x: &Matrix) -> bool {
    let gram = x.t().dot(x) - identity(x.ncols());
    frobenius(gram.view()) <= ORTHONORMAL_TOL
}

/// With orthonormal `X` this is the projection coefficient
/// `Xᵀ·(S − Z − e/β)`. Otherwise it falls back to the orthonormal-row factor
/// of `Xᵀ·(S − Z − e/β)`.
pub fn update_y_accelerated(target: &Matrix, f: &LayerFactor, beta: f64) -> Result<Matrix> {
    f.check(target)?;
    let coeffs = f.x.t().dot(&effective_target(target, f, beta));
    if is_orthonormal(&f.x) {
        return Ok(coeffs);
    }
    let q = qr_decompose(&coeffs.t().to_owned())?.q;
    Ok(q.t().to_owned())
}

/// `shrink(S − XY − e/β, 1/β²)`
pub fn update_z(target: &Matrix, f: &LayerFactor, beta: f64) -> Result<Matrix> {
    f.check(target)?;
    let mut v = target - &f.x.dot(&f.y);
    Zip::from(&mut v).and(&f.e).for_each(|v, &e| *v -= e / beta);
    shrink(&v, 1.0 / (beta * beta))
}

/// `e + η·β·(XY + Z − S)`
pub fn update_multiplier(target: &Matrix, f: &LayerFactor, config: &AdmmConfig) -> Result<Matrix> {
    f.check(target)?;
    let step = config.eta * config.beta;
    let mut e = f.e.clone();
    Zip::from(&mut e)
        .and(&f.x.dot(&f.y))
        .and(&f.z)
        .and(target)
        .for_each(|e, &p, &z, &s| *e += step * (p + z - s));
    Ok(e)
}

const ROLE_X: u64 = 0;
const ROLE_Y: u64 = 1;

/// Independent random stream for one factor of one layer.
pub fn factor_rng(seed: u64, layer: usize, role: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((layer as u64) << 8) | role);
    rng
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

/// Random starting point: Gaussian `X` and `Y`, zero `Z` and `e`.
pub fn initial_factor(
    shape: (usize, usize),
    h: usize,
    layer_index: usize,
    seed: u64,
) -> LayerFactor {
    let (m, n) = shape;
    LayerFactor {
        x: gaussian(m, h, &mut factor_rng(seed, layer_index, ROLE_X)),
        y: gaussian(h, n, &mut factor_rng(seed, layer_index, ROLE_Y)),
        z: Matrix::zeros((m, n)),
        e: Matrix::zeros((m, n)),
        layer_index,
    }
}

/// Solves a first-layer problem. See [`solve_layer_indexed`].
pub fn solve_layer(
    target: &Matrix,
    h: usize,
    config: &AdmmConfig,
) -> Result<(LayerFactor, ConvergenceTrace)> {
    solve_layer_indexed(target, h, 1, config)
}

/// Factorizes `target ≈ X·Y + Z` with `X` having `h` columns, starting
/// from the seeded random point for `layer_index`.
pub fn solve_layer_indexed(
    target: &Matrix,
    h: usize,
    layer_index: usize,
    config: &AdmmConfig,
) -> Result<(LayerFactor, ConvergenceTrace)> {
    config.validate()?;
    ensure_finite(target, "solve_layer target")?;
    let limit = target.nrows().min(target.ncols());
    if h == 0 || h >= limit {
        return Err(DelmarError::RankTooLarge { rank: h, limit });
    }
    let start = initial_factor(target.dim(), h, layer_index, config.seed);
    iterate(target, start, config)
}

/// Continues the iteration from a given state, e.g. a previous solution.
pub fn resume_layer(
    target: &Matrix,
    start: LayerFactor,
    config: &AdmmConfig,
) -> Result<(LayerFactor, ConvergenceTrace)> {
    config.validate()?;
    ensure_finite(target, "resume_layer target")?;
    start.check(target)?;
    iterate(target, start, config)
}

/// Sums gathered while sweeping the entries once per iteration.
#[derive(Default)]
struct SweepSums {
    residual_sq: f64,
    quad: f64,
    inner: f64,
    l1: f64,
}

/// Updates `z` and `e` entrywise given `p = X·Y`, and refreshes `a` to the
/// next effective target `S − Z − e/β`.
fn sweep(
    s: &[f64],
    p: &[f64],
    z: &mut [f64],
    e: &mut [f64],
    a: &mut [f64],
    beta: f64,
    step: f64,
) -> SweepSums {
    let inv_beta = 1.0 / beta;
    let tau = inv_beta * inv_beta;
    let mut sums = SweepSums::default();
    let cells = s
        .iter()
        .zip(p)
        .zip(z.iter_mut())
        .zip(e.iter_mut().zip(a.iter_mut()));
    for (((&s, &p), z), (e, a)) in cells {
        let d = p - s;
        *z = shrink_scalar(-d - *e * inv_beta, tau);
        let r = d + *z;
        *e += step * r;
        *a = s - *z - *e * inv_beta;
        sums.residual_sq += r * r;
        sums.quad += d * d;
        sums.inner += d * *e;
        sums.l1 += z.abs();
    }
    sums
}

fn standard(a: Matrix) -> Matrix {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn iterate(
    target: &Matrix,
    mut f: LayerFactor,
    config: &AdmmConfig,
) -> Result<(LayerFactor, ConvergenceTrace)> {
    let beta = config.beta;
    let step = config.eta * beta;
    let norm = frobenius(target.view());
    let denom = if norm > 0.0 { norm } else { 1.0 };
    let target = standard(target.clone());
    f.z = standard(f.z);
    f.e = standard(f.e);
    let mut a = effective_target(&target, &f, beta);

    let mut residuals = Vec::new();
    let mut lagrangians = Vec::new();
    let mut termination = Termination::MaxIter;
    let layer = f.layer_index;

    for iteration in 1..=config.max_iter {
        let diverged = DelmarError::NonFiniteIterate { layer, iteration };
        match config.mode {
            UpdateMode::Exact => {
                f.x = a.dot(&pseudoinverse(&f.y)?);
                if !f.x.iter().all(|v| v.is_finite()) {
                    return Err(diverged);
                }
                f.y = pseudoinverse(&f.x)?.dot(&a);
            }
            UpdateMode::Accelerated => {
                f.x = orthonormal_basis(&a.dot(&f.y.t()), f.rank())
                    .map_err(|_| DelmarError::NonFiniteIterate { layer, iteration })?;
                f.y = f.x.t().dot(&a);
            }
        }
        if !f.y.iter().all(|v| v.is_finite()) {
            return Err(diverged);
        }

        let xy = f.x.dot(&f.y);
        let sums = sweep(
            target.as_slice().unwrap(),
            xy.as_slice().unwrap(),
            f.z.as_slice_mut().unwrap(),
            f.e.as_slice_mut().unwrap(),
            a.as_slice_mut().unwrap(),
            beta,
            step,
        );
        let residual = sums.residual_sq.sqrt() / denom;
        let lagrangian = 0.5 * beta * sums.quad + sums.inner + sums.l1 / beta;
        if !residual.is_finite() || !lagrangian.is_finite() {
            return Err(diverged);
        }
        residuals.push(residual);
        lagrangians.push(lagrangian);
        if residual <= config.tol {
            termination = Termination::Tolerance;
            break;
        }
    }

    if config.mode == UpdateMode::Accelerated {
        canonicalize(&mut f)?;
    }
    let trace = ConvergenceTrace {
        iterations: residuals.len(),
        primal_residuals: residuals,
        lagrangian_values: lagrangians,
        termination,
    };
    Ok((f, trace))
}

/// Rotates the orthonormal basis onto the principal directions of `Y` so
/// that the rows of `Y` are ordered by energy, with each row's sum made
/// nonnegative. `X·Y` is unchanged.
fn canonicalize(f: &mut LayerFactor) -> Result<()> {
    let dec = svd(&f.y)?;
    let u = dec.u;
    let mut x = f.x.dot(&u);
    let mut y = u.t().dot(&f.y);
    for (i, mut row) in y.rows_mut().into_iter().enumerate() {
        if row.sum() < 0.0 {
            row.mapv_inplace(|v| -v);
            x.column_mut(i).mapv_inplace(|v| -v);
        }
    }
    f.x = x;
    f.y = y;
    Ok(())
}
