//! Backward refinement of the feature matrices.
//!
//! Sweeping from the deepest layer up, each `Y_k` is refined so that the
//! composed reconstruction `X₁·…·X_k·Y_k` better explains `S − Z₁`. The
//! refinement is a sign-split multiplicative update: the positive and
//! negative parts of `Y_k` are rescaled in turn by square-root factors built
//! from the positive and negative parts of the normal equations. Weight
//! matrices and backgrounds pass through unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{DelmarError, Result};
use crate::linalg::{identity, negative_part, positive_part, pseudoinverse, split_signs, Matrix};
use crate::pipeline::LayerStack;

/// Lower clamp on the denominator of the multiplicative factor.
pub const DENOMINATOR_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbpState {
    /// `X₁·…·X_{k−1}`, the identity for `k = 1`.
    pub psi: Matrix,
    /// `Y_M` for the deepest layer, `X_{k+1}·Ŷ_{k+1}` above it.
    pub y_hat: Matrix,
    /// `ψ†·(S − Z₁)·Ŷ_k†`. Diagnostic only.
    pub d: Matrix,
    pub layer_index: usize,
}

/// `X₁·…·X_{k−1}`; the `m × m` identity for `k = 1`.
pub fn compose_psi(stack: &LayerStack, k: usize) -> Result<Matrix> {
    if k == 0 || k > stack.depth {
        return Err(DelmarError::LayerOutOfRange {
            layer: k,
            depth: stack.depth,
        });
    }
    if k == 1 {
        return Ok(identity(stack.source_shape.0));
    }
    stack.composed_weights(k - 1)
}

fn multiplicative_step(
    b: &Matrix,
    w: &Matrix,
    wtw_pos: &Matrix,
    wtw_neg: &Matrix,
    t: &Matrix,
) -> Matrix {
    let wtt = w.t().dot(t);
    let num = positive_part(&wtt) + wtw_neg.dot(b);
    let den = negative_part(&wtt) + wtw_pos.dot(b);
    let mut out = b.clone();
    ndarray::Zip::from(&mut out)
        .and(&num)
        .and(&den)
        .for_each(|o, &n, &d| *o *= (n / d.max(DENOMINATOR_CLAMP)).sqrt());
    out
}

/// One multiplicative refinement of `y` for the fit `w·y ≈ target`.
///
/// `y` is split into `P − N` with `P, N ≥ 0`. `P` is updated against
/// `target + w·N`, then `N` against `w·P − target`. Each half-step does not
/// increase `‖w·(P − N) − target‖`, zero entries stay zero, and no entry
/// changes sign.
pub fn mbp_update_y(w: &Matrix, target: &Matrix, y: &Matrix) -> Result<Matrix> {
    if w.nrows() != target.nrows() || y.nrows() != w.ncols() || y.ncols() != target.ncols() {
        return Err(DelmarError::ShapeMismatch {
            context: "mbp_update_y",
            expected: (w.ncols(), target.ncols()),
            actual: y.dim(),
        });
    }
    let (pos, neg) = split_signs(y)?;
    let wtw = w.t().dot(w);
    let wtw_pos = positive_part(&wtw);
    let wtw_neg = negative_part(&wtw);

    let pos = multiplicative_step(&pos, w, &wtw_pos, &wtw_neg, &(target + &w.dot(&neg)));
    let neg = multiplicative_step(&neg, w, &wtw_pos, &wtw_neg, &(w.dot(&pos) - target));
    Ok(pos - neg)
}

/// One backward sweep over the stack, deepest layer first.
pub fn backpropagate(stack: &LayerStack, signal: &Matrix) -> Result<(LayerStack, Vec<MbpState>)> {
    if signal.dim() != stack.source_shape {
        return Err(DelmarError::ShapeMismatch {
            context: "backpropagate signal",
            expected: stack.source_shape,
            actual: signal.dim(),
        });
    }
    let target = signal - &stack.layers[0].z;
    let mut refined = stack.clone();
    let mut states = Vec::with_capacity(stack.depth);
    let mut y_hat = stack.layers[stack.depth - 1].y.clone();

    for k in (1..=stack.depth).rev() {
        if k < stack.depth {
            y_hat = stack.layers[k].x.dot(&y_hat);
        }
        let psi = compose_psi(stack, k)?;
        let w = if k == 1 {
            stack.layers[0].x.clone()
        } else {
            psi.dot(&stack.layers[k - 1].x)
        };
        let y = mbp_update_y(&w, &target, &stack.layers[k - 1].y)?;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(DelmarError::NonFiniteIterate {
                layer: k,
                iteration: 0,
            });
        }
        refined.layers[k - 1].y = y;

        let y_hat_pinv = pseudoinverse(&y_hat)?;
        let d = if k == 1 {
            target.dot(&y_hat_pinv)
        } else {
            pseudoinverse(&psi)?.dot(&target).dot(&y_hat_pinv)
        };
        states.push(MbpState {
            psi,
            y_hat: y_hat.clone(),
            d,
            layer_index: k,
        });
    }
    Ok((refined, states))
}
