//! Attributed stochastic block model.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::AttributedGraph;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub n: usize,
    pub k: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub attr_dim: usize,
    /// Pairwise distance between block attribute means.
    pub separation: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SbmParams {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.k == 0 || self.n == 0 {
            return bad("n and k must be positive".into());
        }
        if self.n % self.k != 0 {
            return bad(format!("n = {} is not divisible by k = {}", self.n, self.k));
        }
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return bad("edge probabilities must lie in [0, 1]".into());
        }
        if self.p_out > self.p_in {
            return bad("p_out must not exceed p_in".into());
        }
        if self.attr_dim < self.k {
            return bad(format!(
                "attr_dim = {} must be at least k = {} to place block means",
                self.attr_dim, self.k
            ));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return bad("separation must be a finite nonnegative number".into());
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be positive".into());
        }
        Ok(())
    }
}

const MEAN_STREAM: u64 = 0x5b3;

/// `k` orthonormal directions in `R^d` (Gram–Schmidt on Gaussian draws).
fn orthonormal_directions(k: usize, d: usize, rng: &mut impl Rng) -> Array2<f64> {
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let mut dirs = Array2::<f64>::zeros((k, d));
    let mut b = 0;
    while b < k {
        let mut v: Array1<f64> = (0..d).map(|_| gauss.sample(rng)).collect();
        for prev in dirs.rows().into_iter().take(b) {
            let proj = v.dot(&prev);
            v.scaled_add(-proj, &prev);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            dirs.row_mut(b).assign(&(v / norm));
            b += 1;
        }
    }
    dirs
}

/// Samples a graph with `k` equal contiguous blocks. Block means are
/// `separation/√2` times orthonormal directions fixed by `(k, attr_dim)`, so every pair of means
/// is exactly `separation` apart and the signal is spread over all attribute
/// dimensions; attributes add isotropic Gaussian noise of scale `noise_sd`.
pub fn generate_sbm(params: &SbmParams) -> Result<AttributedGraph> {
    params.validate()?;
    let SbmParams { n, k, p_in, p_out, attr_dim, separation, noise_sd, .. } = *params;
    let block_size = n / k;
    let labels: Vec<usize> = (0..n).map(|i| i / block_size).collect();

    let mut edge_rng = seed::rng(seed::derive(params.seed, &[0]));
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if edge_rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }

    let mut attr_rng = seed::rng(seed::derive(params.seed, &[1]));
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    // The mean directions depend only on the shape, so graphs that differ only
    // in `seed` are draws from one distribution.
    let mut mean_rng = seed::rng(seed::derive(MEAN_STREAM, &[k as u64, attr_dim as u64]));
    let means = orthonormal_directions(k, attr_dim, &mut mean_rng) * (separation / std::f64::consts::SQRT_2);
    let mut attributes = Array2::zeros((n, attr_dim));
    for (i, mut row) in attributes.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            *v = noise.sample(&mut attr_rng);
        }
        row += &means.row(labels[i]);
    }

    AttributedGraph::new(attributes, edges, Some(labels))
}
