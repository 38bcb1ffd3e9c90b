//! Stochastic graph augmentation: centrality-aware edge dropping and
//! attribute-dimension masking.
//!
//! Edge centrality is the mean of `ln(1 + degree)` over both endpoints; an
//! attribute dimension's weight is `Σ_i |x_if| · ln(1 + deg i)`. Weights `w`
//! map to probabilities `base · (w_max − w) / (w_max − w_mean)` clamped to
//! `[0, cap]`, so low-weight edges and dimensions are perturbed more often.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{AttributedGraph, NormalizedAdjacency};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub edge_drop_rate: f64,
    pub attr_mask_rate: f64,
    pub prob_cap: f64,
    pub adaptive: bool,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            edge_drop_rate: 0.3,
            attr_mask_rate: 0.3,
            prob_cap: 0.7,
            adaptive: true,
        }
    }
}

impl AugmentationSpec {
    /// Leaves the graph untouched.
    pub fn identity() -> Self {
        Self {
            edge_drop_rate: 0.0,
            attr_mask_rate: 0.0,
            prob_cap: 1.0,
            adaptive: false,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.edge_drop_rate) || !in_unit(self.attr_mask_rate) {
            return Err(crate::Error::InvalidArgument(
                "augmentation rates must lie in [0, 1]".into(),
            ));
        }
        if !(self.prob_cap > 0.0 && self.prob_cap <= 1.0) {
            return Err(crate::Error::InvalidArgument("prob_cap must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// One perturbed copy of a graph with its propagation operator.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphView {
    pub attributes: Array2<f64>,
    pub edges: Vec<(usize, usize)>,
    pub normalized: NormalizedAdjacency,
}

impl GraphView {
    /// The unperturbed graph as a view.
    pub fn raw(graph: &AttributedGraph) -> Self {
        Self {
            attributes: graph.attributes().clone(),
            edges: graph.edges().to_vec(),
            normalized: graph.sym_normalize(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.attributes.nrows()
    }
}

fn rescale(weights: &[f64], base: f64, cap: f64) -> Vec<f64> {
    if weights.is_empty() {
        return Vec::new();
    }
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    // Equal weights carry no ranking; the rounded mean can still sit a few ulps
    // below the max, so compare against the min instead.
    if max - min <= 1e-12 * max.abs().max(1.0) {
        return vec![base; weights.len()];
    }
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    let spread = max - mean;
    weights
        .iter()
        .map(|&w| (base * (max - w) / spread).clamp(0.0, cap))
        .collect()
}

/// Drop probability of every edge of `graph`, in edge-list order.
pub fn edge_drop_probs(graph: &AttributedGraph, spec: &AugmentationSpec) -> Vec<f64> {
    if !spec.adaptive {
        return vec![spec.edge_drop_rate; graph.n_edges()];
    }
    let log_deg: Vec<f64> = graph
        .degree_vector()
        .into_iter()
        .map(|d| (1.0 + d as f64).ln())
        .collect();
    let weights: Vec<f64> = graph
        .edges()
        .iter()
        .map(|&(u, v)| 0.5 * (log_deg[u] + log_deg[v]))
        .collect();
    rescale(&weights, spec.edge_drop_rate, spec.prob_cap)
}

/// Masking probability of every attribute dimension.
pub fn attr_mask_probs(graph: &AttributedGraph, spec: &AugmentationSpec) -> Vec<f64> {
    if !spec.adaptive {
        return vec![spec.attr_mask_rate; graph.attr_dim()];
    }
    let log_deg: Vec<f64> = graph
        .degree_vector()
        .into_iter()
        .map(|d| (1.0 + d as f64).ln())
        .collect();
    let weights: Vec<f64> = graph
        .attributes()
        .columns()
        .into_iter()
        .map(|col| col.iter().zip(&log_deg).map(|(x, c)| x.abs() * c).sum())
        .collect();
    rescale(&weights, spec.attr_mask_rate, spec.prob_cap)
}

/// Samples one view: every edge is dropped independently with its drop
/// probability and every attribute dimension is zeroed (for all nodes) with
/// its masking probability.
pub fn sample_view(graph: &AttributedGraph, spec: &AugmentationSpec, seed: u64) -> GraphView {
    let mut rng = seed::rng(seed);
    let drop = edge_drop_probs(graph, spec);
    let edges: Vec<(usize, usize)> = graph
        .edges()
        .iter()
        .zip(&drop)
        .filter(|&(_, &p)| !rng.random_bool(p))
        .map(|(&e, _)| e)
        .collect();

    let mask = attr_mask_probs(graph, spec);
    let mut attributes = graph.attributes().clone();
    for (mut col, &p) in attributes.columns_mut().into_iter().zip(&mask) {
        if rng.random_bool(p) {
            col.fill(0.0);
        }
    }

    let normalized = NormalizedAdjacency::from_edges(graph.n_nodes(), &edges);
    GraphView {
        attributes,
        edges,
        normalized,
    }
}
