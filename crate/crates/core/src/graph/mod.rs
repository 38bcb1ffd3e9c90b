//! Attributed graphs: an undirected edge list plus a dense attribute matrix.

mod io;
mod sbm;

pub use io::{load_graph, load_labels, read_attributes, read_edges, write_labels, GraphDocument};
pub use sbm::{generate_sbm, SbmParams};

use ndarray::Array2;

use crate::diff::CsrMatrix;
use crate::{Error, Result};

/// An undirected, unweighted graph whose nodes carry real feature vectors.
///
/// Edges are stored once each as `(u, v)` with `u < v`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    attributes: Array2<f64>,
    edges: Vec<(usize, usize)>,
    labels: Option<Vec<usize>>,
}

impl AttributedGraph {
    /// Builds a graph, canonicalising the edge list: endpoints are ordered,
    /// duplicates and reversed duplicates collapse, and self-loops are dropped.
    pub fn new(
        attributes: Array2<f64>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = attributes.nrows();
        if n == 0 {
            return Err(Error::MalformedGraph("graph has no nodes".into()));
        }
        if !attributes.iter().all(|v| v.is_finite()) {
            return Err(Error::MalformedGraph("non-finite attribute".into()));
        }
        let mut canon = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::MalformedGraph(format!(
                    "edge ({u}, {v}) has an endpoint >= {n}"
                )));
            }
            if u != v {
                canon.push((u.min(v), u.max(v)));
            }
        }
        canon.sort_unstable();
        canon.dedup();
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::MalformedGraph(format!(
                    "{} labels for {n} nodes",
                    l.len()
                )));
            }
        }
        Ok(Self {
            attributes,
            edges: canon,
            labels,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.attributes.nrows()
    }

    pub fn attr_dim(&self) -> usize {
        self.attributes.ncols()
    }

    pub fn attributes(&self) -> &Array2<f64> {
        &self.attributes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Cluster count implied by the ground-truth labels (max label + 1).
    pub fn n_label_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    pub fn with_labels(mut self, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.n_nodes() {
                return Err(Error::MalformedGraph(format!(
                    "{} labels for {} nodes",
                    l.len(),
                    self.n_nodes()
                )));
            }
        }
        self.labels = labels;
        Ok(self)
    }

    /// Number of incident edges per node.
    pub fn degree_vector(&self) -> Vec<usize> {
        degrees(self.n_nodes(), &self.edges)
    }

    /// Dense 0/1 adjacency matrix. Intended for small graphs and tests.
    pub fn dense_adjacency(&self) -> Array2<f64> {
        let n = self.n_nodes();
        let mut a = Array2::zeros((n, n));
        for &(u, v) in &self.edges {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        a
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `d̃_i = 1 + deg(i)`.
    pub fn sym_normalize(&self) -> NormalizedAdjacency {
        NormalizedAdjacency::from_edges(self.n_nodes(), &self.edges)
    }

    /// Relabels nodes so that old node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_nodes();
        if perm.len() != n {
            return Err(Error::InvalidArgument("permutation length".into()));
        }
        let mut attrs = Array2::zeros(self.attributes.dim());
        for (old, &new) in perm.iter().enumerate() {
            attrs.row_mut(new).assign(&self.attributes.row(old));
        }
        let labels = self.labels.as_ref().map(|l| {
            let mut out = vec![0; n];
            for (old, &new) in perm.iter().enumerate() {
                out[new] = l[old];
            }
            out
        });
        Self::new(
            attrs,
            self.edges.iter().map(|&(u, v)| (perm[u], perm[v])),
            labels,
        )
    }
}

pub(crate) fn degrees(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut deg = vec![0; n];
    for &(u, v) in edges {
        deg[u] += 1;
        deg[v] += 1;
    }
    deg
}

/// The GCN propagation operator of a graph, stored sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: CsrMatrix,
}

impl NormalizedAdjacency {
    /// Normalises the undirected edge list `edges` (each edge listed once,
    /// no self-loops) over `n` nodes.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let inv_sqrt: Vec<f64> = degrees(n, edges)
            .into_iter()
            .map(|d| 1.0 / ((d + 1) as f64).sqrt())
            .collect();
        let mut triplets = Vec::with_capacity(n + 2 * edges.len());
        for (i, &s) in inv_sqrt.iter().enumerate() {
            triplets.push((i, i, s * s));
        }
        for &(u, v) in edges {
            let w = inv_sqrt[u] * inv_sqrt[v];
            triplets.push((u, v, w));
            triplets.push((v, u, w));
        }
        Self {
            matrix: CsrMatrix::from_triplets(n, n, &triplets),
        }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.matrix.to_dense()
    }
}
