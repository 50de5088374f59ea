//! Evaluation of recovered features: support overlap, Hausdorff distance
//! between supports, correlation matching, reconstruction error and
//! split-half reproducibility.

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::admm::AdmmConfig;
use crate::error::{DelmarError, Result};
use crate::linalg::{frobenius, Matrix};
use crate::pipeline::{decompose, DecomposeOptions};

/// How a feature row is binarized into a support set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Threshold {
    /// Entries strictly above the value.
    Absolute(f64),
    /// Entries strictly above this fraction of the row maximum.
    Relative(f64),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Absolute(0.0)
    }
}

impl Threshold {
    fn resolve(self, row: ArrayView1<'_, f64>) -> f64 {
        match self {
            Threshold::Absolute(t) => t,
            Threshold::Relative(frac) => {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                frac * max.max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub component: usize,
    pub template: usize,
    /// Pearson correlation of the pair (sign kept).
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// Mean support overlap over matched pairs.
    pub overlap_similarity: f64,
    /// Mean symmetric Hausdorff distance over matched pairs whose supports
    /// are both nonempty.
    pub hausdorff_distance: f64,
    /// Mean absolute correlation over matched pairs.
    pub pearson_r: f64,
    pub matched_pairs: Vec<MatchedPair>,
    /// Overlap of each matched pair, in `matched_pairs` order.
    pub per_pair_overlap: Vec<f64>,
}

/// Indices of entries strictly above `threshold`.
pub fn support(a: ArrayView1<'_, f64>, threshold: f64) -> Vec<usize> {
    a.iter()
        .enumerate()
        .filter(|(_, &v)| v > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// `|A ∩ B| / |A ∪ B|` of the supports above `threshold`; 1 when both are
/// empty.
pub fn overlap_similarity(
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    threshold: f64,
) -> Result<f64> {
    if a.len() != b.len() {
        return Err(DelmarError::LengthMismatch(a.len(), b.len()));
    }
    let mut both = 0usize;
    let mut either = 0usize;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (ia, ib) = (x > threshold, y > threshold);
        both += (ia && ib) as usize;
        either += (ia || ib) as usize;
    }
    Ok(if either == 0 {
        1.0
    } else {
        both as f64 / either as f64
    })
}

fn distance(coords: &Array2<f64>, i: usize, j: usize) -> f64 {
    coords
        .row(i)
        .iter()
        .zip(coords.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn directed(from: &[usize], to: &[usize], coords: &Array2<f64>) -> f64 {
    from.iter()
        .map(|&i| {
            to.iter()
                .map(|&j| distance(coords, i, j))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between two index sets, with index `i`
/// located at `coords.row(i)` and Euclidean distance between locations.
pub fn hausdorff_distance(a: &[usize], b: &[usize], coords: &Array2<f64>) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(DelmarError::EmptySupport);
    }
    let limit = coords.nrows();
    if let Some(&bad) = a.iter().chain(b).find(|&&i| i >= limit) {
        return Err(DelmarError::LengthMismatch(bad, limit));
    }
    Ok(directed(a, b, coords).max(directed(b, a, coords)))
}

/// Positions `0, 1, …, n−1` on a line.
pub fn line_coordinates(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, 1), |(i, _)| i as f64)
}

/// Pearson correlation; 0 when either input is constant.
pub fn pearson(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(DelmarError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pairs rows of `a` with rows of `b` by descending `|r|`, each row used at
/// most once. Ties are broken by the lower index.
pub fn greedy_match(a: &Matrix, b: &Matrix) -> Result<Vec<MatchedPair>> {
    if a.ncols() != b.ncols() {
        return Err(DelmarError::LengthMismatch(a.ncols(), b.ncols()));
    }
    let mut candidates = Vec::with_capacity(a.nrows() * b.nrows());
    for (i, ra) in a.axis_iter(Axis(0)).enumerate() {
        for (j, rb) in b.axis_iter(Axis(0)).enumerate() {
            candidates.push((i, j, pearson(ra, rb)?));
        }
    }
    candidates.sort_by(|x, y| {
        y.2.abs()
            .total_cmp(&x.2.abs())
            .then(x.0.cmp(&y.0))
            .then(x.1.cmp(&y.1))
    });
    let mut used_a = vec![false; a.nrows()];
    let mut used_b = vec![false; b.nrows()];
    let mut pairs = Vec::new();
    for (i, j, r) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push(MatchedPair {
                component: i,
                template: j,
                score: r,
            });
        }
    }
    Ok(pairs)
}

/// Matches feature rows to template rows and scores each pair. A feature
/// anticorrelated with its template is negated before thresholding, since
/// the sign of a component is arbitrary. `coords` defaults to positions on a
/// line.
pub fn compare_features(
    features: &Matrix,
    templates: &Matrix,
    threshold: Threshold,
    coords: Option<&Array2<f64>>,
) -> Result<SimilarityReport> {
    let pairs = greedy_match(features, templates)?;
    let line;
    let coords = match coords {
        Some(c) => c,
        None => {
            line = line_coordinates(features.ncols());
            &line
        }
    };

    let mut overlaps = Vec::with_capacity(pairs.len());
    let mut distances = Vec::new();
    for pair in &pairs {
        let sign = if pair.score < 0.0 { -1.0 } else { 1.0 };
        let f = features.row(pair.component).mapv(|v| sign * v);
        let t = templates.row(pair.template);
        let tf = threshold.resolve(f.view());
        let tt = threshold.resolve(t);
        let sf = support(f.view(), tf);
        let st = support(t, tt);
        let union = sf.len() + st.len() - sf.iter().filter(|i| st.binary_search(i).is_ok()).count();
        overlaps.push(if union == 0 {
            1.0
        } else {
            (sf.len() + st.len() - union) as f64 / union as f64
        });
        if !sf.is_empty() && !st.is_empty() {
            distances.push(hausdorff_distance(&sf, &st, coords)?);
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let abs_r: Vec<f64> = pairs.iter().map(|p| p.score.abs()).collect();
    Ok(SimilarityReport {
        overlap_similarity: mean(&overlaps),
        hausdorff_distance: mean(&distances),
        pearson_r: mean(&abs_r),
        matched_pairs: pairs,
        per_pair_overlap: overlaps,
    })
}

/// `‖reconstruction − s‖ / ‖s‖`
pub fn relative_error(s: &Matrix, reconstruction: &Matrix) -> Result<f64> {
    if s.dim() != reconstruction.dim() {
        return Err(DelmarError::ShapeMismatch {
            context: "relative_error",
            expected: s.dim(),
            actual: reconstruction.dim(),
        });
    }
    let norm = frobenius(s.view());
    if norm == 0.0 {
        return Err(DelmarError::ZeroSignal);
    }
    Ok(frobenius((reconstruction - s).view()) / norm)
}

/// Fraction of nonzero entries.
pub fn sparsity(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().filter(|&&v| v != 0.0).count() as f64 / a.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reproducibility {
    /// Mean matched `|r|` between the two halves' first-layer features.
    pub value: f64,
    pub pairs: Vec<MatchedPair>,
    /// Row indices assigned to each half.
    pub halves: (Vec<usize>, Vec<usize>),
}

/// Splits the rows of `s` at random into two disjoint halves, decomposes
/// each, and compares the first-layer features of the two runs.
pub fn split_half_reproducibility(
    s: &Matrix,
    config: &AdmmConfig,
    options: &DecomposeOptions,
    seed: u64,
) -> Result<Reproducibility> {
    let m = s.nrows();
    if m < 2 {
        return Err(DelmarError::TooFewObservations(m));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (first, second) = order.split_at(m / 2);
    let mut first = first.to_vec();
    let mut second = second.to_vec();
    first.sort_unstable();
    second.sort_unstable();

    let test = s.select(Axis(0), &first);
    let retest = s.select(Axis(0), &second);
    let (a, b) = rayon::join(
        || decompose(&test, config, options),
        || decompose(&retest, config, options),
    );
    let (a, b) = (a?.0, b?.0);
    let pairs = greedy_match(&a.layers[0].y, &b.layers[0].y)?;
    let value = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().map(|p| p.score.abs()).sum::<f64>() / pairs.len() as f64
    };
    Ok(Reproducibility {
        value,
        pairs,
        halves: (first, second),
    })
}
