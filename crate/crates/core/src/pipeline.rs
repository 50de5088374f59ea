//! Layer-by-layer driver with automatic depth discovery.
//!
//! Layer 1 factorizes the signal at the requested rank. Every further layer
//! factorizes the previous layer's features at the rank estimated from
//! them, until the estimate reaches 1 or the layer cap is hit. The finished
//! stack is then refined by backpropagation.

use serde::{Deserialize, Serialize};

use crate::admm::{solve_layer_indexed, AdmmConfig, ConvergenceTrace, LayerFactor};
use crate::error::{DelmarError, Result};
use crate::linalg::{ensure_finite, frobenius, Matrix};
use crate::mbp::backpropagate;
use crate::rro::{estimate_rank, RankDecision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeOptions {
    /// Rank of the first layer.
    pub initial_rank: usize,
    pub max_layers: usize,
    /// Number of backward refinement sweeps; 0 disables refinement.
    pub mbp_sweeps: usize,
}

impl DecomposeOptions {
    pub fn new(initial_rank: usize) -> Self {
        DecomposeOptions {
            initial_rank,
            max_layers: 8,
            mbp_sweeps: 1,
        }
    }

    /// `round(min(m, n) / 4)`, at least 1.
    pub fn default_initial_rank(shape: (usize, usize)) -> usize {
        ((shape.0.min(shape.1) as f64 / 4.0).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    pub layers: Vec<LayerFactor>,
    pub ranks: Vec<usize>,
    pub depth: usize,
    pub source_shape: (usize, usize),
    pub config_snapshot: AdmmConfig,
    /// Every rank estimate made while growing the stack, in order.
    pub rank_decisions: Vec<RankDecision>,
}

impl LayerStack {
    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer == 0 || layer > self.depth {
            return Err(DelmarError::LayerOutOfRange {
                layer,
                depth: self.depth,
            });
        }
        Ok(())
    }

    pub fn layer(&self, layer: usize) -> Result<&LayerFactor> {
        self.check_layer(layer)?;
        Ok(&self.layers[layer - 1])
    }

    /// `X₁·…·X_k`
    pub fn composed_weights(&self, upto_layer: usize) -> Result<Matrix> {
        self.check_layer(upto_layer)?;
        let mut w = self.layers[0].x.clone();
        for f in &self.layers[1..upto_layer] {
            w = w.dot(&f.x);
        }
        Ok(w)
    }

    /// The factorization target of `layer`: the signal for layer 1, the
    /// previous layer's features otherwise.
    pub fn layer_target<'a>(&'a self, signal: &'a Matrix, layer: usize) -> Result<&'a Matrix> {
        self.check_layer(layer)?;
        Ok(if layer == 1 {
            signal
        } else {
            &self.layers[layer - 2].y
        })
    }
}

/// `X₁·…·X_k·Y_k + Z₁`
pub fn reconstruct(stack: &LayerStack, upto_layer: usize) -> Result<Matrix> {
    let w = stack.composed_weights(upto_layer)?;
    Ok(w.dot(&stack.layers[upto_layer - 1].y) + &stack.layers[0].z)
}

/// Features of one layer, one component per row.
pub fn hierarchy_features(stack: &LayerStack, layer: usize) -> Result<Matrix> {
    Ok(stack.layer(layer)?.y.clone())
}

fn relative(diff: Matrix, reference: &Matrix) -> f64 {
    let norm = frobenius(reference.view());
    frobenius(diff.view()) / if norm > 0.0 { norm } else { 1.0 }
}

/// `‖X_k·Y_k + Z_k − target_k‖ / ‖target_k‖` for every layer.
pub fn layer_residuals(stack: &LayerStack, signal: &Matrix) -> Result<Vec<f64>> {
    (1..=stack.depth)
        .map(|k| {
            let f = &stack.layers[k - 1];
            let target = stack.layer_target(signal, k)?;
            Ok(relative(f.x.dot(&f.y) + &f.z - target, target))
        })
        .collect()
}

/// `‖reconstruct(stack, k) − S‖ / ‖S‖` for every layer.
pub fn reconstruction_errors(stack: &LayerStack, signal: &Matrix) -> Result<Vec<f64>> {
    (1..=stack.depth)
        .map(|k| Ok(relative(reconstruct(stack, k)? - signal, signal)))
        .collect()
}

/// Grows the stack without any backward refinement.
pub fn decompose_forward(
    s: &Matrix,
    config: &AdmmConfig,
    options: &DecomposeOptions,
) -> Result<(LayerStack, Vec<ConvergenceTrace>)> {
    config.validate()?;
    let (rows, cols) = s.dim();
    if rows.min(cols) < 3 {
        return Err(DelmarError::DegenerateInput { rows, cols });
    }
    if options.max_layers == 0 {
        return Err(DelmarError::InvalidConfig(
            "max_layers must be at least 1".into(),
        ));
    }
    ensure_finite(s, "decompose input")?;

    let (first, trace) = solve_layer_indexed(s, options.initial_rank, 1, config)?;
    let mut layers = vec![first];
    let mut ranks = vec![options.initial_rank];
    let mut traces = vec![trace];
    let mut decisions = Vec::new();

    while layers.len() < options.max_layers {
        let features = &layers.last().unwrap().y;
        let decision = estimate_rank(features)?;
        let h = decision.estimated_rank;
        decisions.push(decision);
        if h <= 1 {
            break;
        }
        let (next, trace) = solve_layer_indexed(features, h, layers.len() + 1, config)?;
        layers.push(next);
        ranks.push(h);
        traces.push(trace);
    }

    let stack = LayerStack {
        depth: layers.len(),
        layers,
        ranks,
        source_shape: (rows, cols),
        config_snapshot: config.clone(),
        rank_decisions: decisions,
    };
    Ok((stack, traces))
}

/// Full decomposition: forward growth followed by `options.mbp_sweeps`
/// backward refinement sweeps.
pub fn decompose(
    s: &Matrix,
    config: &AdmmConfig,
    options: &DecomposeOptions,
) -> Result<(LayerStack, Vec<ConvergenceTrace>)> {
    let (mut stack, traces) = decompose_forward(s, config, options)?;
    for _ in 0..options.mbp_sweeps {
        stack = backpropagate(&stack, s)?.0;
    }
    Ok((stack, traces))
}
