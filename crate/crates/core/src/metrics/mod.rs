//! External clustering metrics and the k-means baseline.
//!
//! All metrics accept arbitrary non-negative integer labels; they are compacted
//! internally, so any bijective relabeling of either side leaves scores
//! unchanged.

mod hungarian;
mod kmeans;

pub use hungarian::{hungarian, Assignment};
pub use kmeans::{kmeans, KMeans};

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use serde::Serialize;

use crate::{Error, Result};

/// Counts of (predicted cluster, true class) co-occurrences.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    pub counts: Array2<usize>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub total: usize,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let order: BTreeMap<usize, usize> = labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    (labels.iter().map(|l| order[l]).collect(), order.len())
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} predictions for {} true labels",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::InvalidArgument("empty labelings".into()));
        }
        let (p, kp) = compact(pred);
        let (t, kt) = compact(truth);
        let mut counts = Array2::zeros((kp, kt));
        for (&a, &b) in p.iter().zip(&t) {
            counts[[a, b]] += 1;
        }
        let row_sums = counts.rows().into_iter().map(|r| r.sum()).collect();
        let col_sums = counts.columns().into_iter().map(|c| c.sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            total: pred.len(),
        })
    }

    /// Cluster-to-class mapping maximising matched counts; `None` for
    /// clusters matched to a padding class.
    /// Maximises matched counts. Among equally good matchings it prefers the
    /// larger F1 sum, which keeps macro-F1 independent of cluster names; the
    /// tie-break weight is below 1/size so it can never trade away a match.
    fn best_mapping(&self) -> Result<Vec<Option<usize>>> {
        let (kp, kt) = self.counts.dim();
        let size = kp.max(kt);
        let tie_weight = 0.5 / size as f64;
        let mut cost = Array2::zeros((size, size));
        for ((r, c), &v) in self.counts.indexed_iter() {
            let f1 = 2.0 * v as f64 / (self.row_sums[r] + self.col_sums[c]) as f64;
            cost[[r, c]] = -(v as f64) - tie_weight * f1;
        }
        let a = hungarian(&cost)?;
        Ok(a.assignment[..kp]
            .iter()
            .map(|&c| (c < kt).then_some(c))
            .collect())
    }
}

fn entropy(marginal: &[usize], n: f64) -> f64 {
    marginal
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Clustering accuracy under the best one-to-one cluster/class matching.
pub fn acc(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let mapping = table.best_mapping()?;
    let matched: usize = mapping
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| table.counts[[r, c]]))
        .sum();
    Ok(matched as f64 / table.total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NmiNormalization {
    #[default]
    Geometric,
    Arithmetic,
}

pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    nmi_with(pred, truth, NmiNormalization::Geometric)
}

pub fn nmi_with(pred: &[usize], truth: &[usize], norm: NmiNormalization) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    let n = t.total as f64;
    let hp = entropy(&t.row_sums, n);
    let ht = entropy(&t.col_sums, n);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for ((r, c), &nij) in t.counts.indexed_iter() {
        if nij > 0 {
            let nij = nij as f64;
            mi += nij / n * (n * nij / (t.row_sums[r] as f64 * t.col_sums[c] as f64)).ln();
        }
    }
    let denom = match norm {
        NmiNormalization::Geometric => (hp * ht).sqrt(),
        NmiNormalization::Arithmetic => 0.5 * (hp + ht),
    };
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    let index: f64 = t.counts.iter().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = t.row_sums.iter().map(|&c| comb2(c)).sum();
    let sum_cols: f64 = t.col_sums.iter().map(|&c| comb2(c)).sum();
    let pairs = comb2(t.total);
    // Scaled by the pair count so every quantity stays an exact integer.
    let num = index * pairs - sum_rows * sum_cols;
    let den = 0.5 * (sum_rows + sum_cols) * pairs - sum_rows * sum_cols;
    if den == 0.0 {
        return Ok(1.0);
    }
    Ok(num / den)
}

/// Unweighted mean over true classes of the F1 score after Hungarian mapping.
pub fn macro_f1(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    let mapping = t.best_mapping()?;
    let kt = t.col_sums.len();
    let mut predicted = vec![0usize; kt];
    let mut hits = vec![0usize; kt];
    for (r, class) in mapping.iter().enumerate() {
        if let Some(c) = *class {
            predicted[c] += t.row_sums[r];
            hits[c] += t.counts[[r, c]];
        }
    }
    let total: f64 = (0..kt)
        .map(|c| {
            let denom = predicted[c] + t.col_sums[c];
            if hits[c] == 0 {
                0.0
            } else {
                2.0 * hits[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / kt as f64)
}

/// The four reported clustering scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusteringScores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub f1: f64,
}

impl ClusteringScores {
    pub fn compute(pred: &[usize], truth: &[usize]) -> Result<Self> {
        Ok(Self {
            acc: acc(pred, truth)?,
            nmi: nmi(pred, truth)?,
            ari: ari(pred, truth)?,
            f1: macro_f1(pred, truth)?,
        })
    }

    /// Compact JSON with every score printed to four decimals.
    pub fn to_json_4dp(&self) -> String {
        format!(
            "{{\"acc\":{:.4},\"nmi\":{:.4},\"ari\":{:.4},\"f1\":{:.4}}}",
            self.acc, self.nmi, self.ari, self.f1
        )
    }
}
