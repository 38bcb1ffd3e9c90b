//! Training objectives, all recorded on a [`Tape`] so they can be
//! differentiated.
//!
//! Each contrastive loss is assembled from one cosine-similarity matrix: the
//! positive terms are a constant-weighted sum of its entries and the
//! denominators are masked row-wise log-sum-exps of the same matrix.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::diff::{Tape, Var};
use crate::{Error, Result};

/// Guards `log ρ` against empty clusters in the balance regulariser.
pub const LOG_EPS: f64 = 1e-12;

/// For every node, the nodes that share its pseudo label (itself included).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterIndexSets {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl ClusterIndexSets {
    pub fn new(labels: &[usize]) -> Self {
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        Self {
            labels: labels.to_vec(),
            members,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    /// Sorted nodes sharing `i`'s label, including `i`.
    pub fn same_cluster(&self, i: usize) -> &[usize] {
        &self.members[self.labels[i]]
    }
}

fn check_temperature(tau: f64, name: &str) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {tau}")))
    }
}

/// Cosine similarities among the rows of `[a; b]`, divided by `tau`.
fn scaled_similarity(tape: &mut Tape<'_>, a: Var, b: Var, tau: f64) -> Var {
    let stacked = tape.vcat(a, b);
    let sim = tape.cosine_sim_matrix(stacked, stacked);
    tape.scale(sim, 1.0 / tau)
}

/// Pseudo-label supervised contrastive loss summed over nodes.
///
/// For anchor `i` the positives are every `(α, β)` view pairing of `i` with a
/// same-cluster node `t`, except `i` against itself in the same view. All
/// positives of `i` share one denominator: the sum over all four view pairings
/// of `exp(s/τ)` between `i` and every other node.
pub fn ssc_loss(
    tape: &mut Tape<'_>,
    m1: Var,
    m2: Var,
    sets: &ClusterIndexSets,
    tau: f64,
) -> Result<Var> {
    check_temperature(tau, "tau2")?;
    let n = tape.shape(m1).0;
    if tape.shape(m1) != tape.shape(m2) {
        return Err(Error::DimensionMismatch("view embeddings differ in shape".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("contrastive loss needs at least two nodes".into()));
    }
    if sets.n_nodes() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} pseudo labels for {n} nodes",
            sets.n_nodes()
        )));
    }

    let sim = scaled_similarity(tape, m1, m2, tau);

    // Row i of [S_top | S_bottom] holds every (α', β', q) pairing for anchor i.
    let top = tape.slice_rows(sim, 0, n);
    let bottom = tape.slice_rows(sim, n, 2 * n);
    let wide = tape.hcat(top, bottom);
    let mask = Array2::from_shape_fn((n, 4 * n), |(i, c)| c % n != i);
    let log_denominators = tape.masked_row_logsumexp(wide, mask);

    let mut pos_weights = Array2::zeros((2 * n, 2 * n));
    let mut denom_weights = Array2::zeros((n, 1));
    for i in 0..n {
        let same = sets.same_cluster(i);
        let size = same.len() as f64;
        let w = -1.0 / size;
        for &t in same {
            for alpha in 0..2 {
                for beta in 0..2 {
                    if t == i && alpha == beta {
                        continue;
                    }
                    pos_weights[[alpha * n + i, beta * n + t]] += w;
                }
            }
        }
        denom_weights[[i, 0]] = (4.0 * size - 2.0) / size;
    }
    let positive = tape.weighted_sum(sim, pos_weights);
    let negative = tape.weighted_sum(log_denominators, denom_weights);
    Ok(tape.add(positive, negative))
}

/// Contrastive loss over cluster columns of the two soft assignments.
///
/// Column `k` of one view is pulled towards column `k` of the other and pushed
/// from every other column of both views. With `exclude_self` false the
/// anchor's similarity to itself stays in the denominator.
pub fn cc_loss(
    tape: &mut Tape<'_>,
    soft1: Var,
    soft2: Var,
    tau: f64,
    exclude_self: bool,
) -> Result<Var> {
    check_temperature(tau, "tau1")?;
    let (n, k) = tape.shape(soft1);
    if tape.shape(soft2) != (n, k) {
        return Err(Error::DimensionMismatch(format!(
            "soft assignments differ in shape: {:?} vs {:?}",
            (n, k),
            tape.shape(soft2)
        )));
    }
    let c1 = tape.transpose(soft1);
    let c2 = tape.transpose(soft2);
    let sim = scaled_similarity(tape, c1, c2, tau);
    let mask = Array2::from_shape_fn((2 * k, 2 * k), |(a, b)| !(exclude_self && a == b));
    let lse = tape.masked_row_logsumexp(sim, mask);

    let scale = 1.0 / (2 * k) as f64;
    let mut pos_weights = Array2::zeros((2 * k, 2 * k));
    for c in 0..k {
        pos_weights[[c, k + c]] = -scale;
        pos_weights[[k + c, c]] = -scale;
    }
    let positive = tape.weighted_sum(sim, pos_weights);
    let negative = tape.weighted_sum(lse, Array2::from_elem((2 * k, 1), scale));
    Ok(tape.add(positive, negative))
}

/// `Σ_k ρ_k log(ρ_k + ε)` for one view, with `ρ` the normalised column mass.
fn negative_entropy(tape: &mut Tape<'_>, soft: Var) -> Var {
    let mass = tape.col_sum(soft);
    let total = tape.sum(soft);
    let rho = tape.div_scalar(mass, total);
    let shifted = tape.add_const(rho, LOG_EPS);
    let log_rho = tape.log(shifted);
    let terms = tape.mul(rho, log_rho);
    tape.sum(terms)
}

/// Cluster-balance regulariser: the negative entropy of the cluster-mass
/// distribution, summed over both views. Minimal (−2 log K) when mass is
/// spread evenly. `literal_sign` flips the sign.
pub fn regularizer(tape: &mut Tape<'_>, soft1: Var, soft2: Var, literal_sign: bool) -> Var {
    let a = negative_entropy(tape, soft1);
    let b = negative_entropy(tape, soft2);
    let r = tape.add(a, b);
    if literal_sign {
        tape.scale(r, -1.0)
    } else {
        r
    }
}

/// NT-Xent over the 2N instances of two views: each instance's positive is the
/// same node in the other view, the remaining 2N − 2 instances are negatives,
/// averaged over all 2N anchors.
pub fn ntxent_loss(tape: &mut Tape<'_>, m1: Var, m2: Var, tau: f64) -> Result<Var> {
    check_temperature(tau, "tau")?;
    let n = tape.shape(m1).0;
    if tape.shape(m1) != tape.shape(m2) {
        return Err(Error::DimensionMismatch("view embeddings differ in shape".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("contrastive loss needs at least two nodes".into()));
    }
    let sim = scaled_similarity(tape, m1, m2, tau);
    let mask = Array2::from_shape_fn((2 * n, 2 * n), |(a, b)| a != b);
    let lse = tape.masked_row_logsumexp(sim, mask);

    let scale = 1.0 / (2 * n) as f64;
    let mut pos_weights = Array2::zeros((2 * n, 2 * n));
    for i in 0..n {
        pos_weights[[i, n + i]] = -scale;
        pos_weights[[n + i, i]] = -scale;
    }
    let positive = tape.weighted_sum(sim, pos_weights);
    let negative = tape.weighted_sum(lse, Array2::from_elem((2 * n, 1), scale));
    Ok(tape.add(positive, negative))
}

/// Hyper-parameters of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub tau1: f64,
    pub tau2: f64,
    pub gamma: f64,
    /// Drop the cluster contrastive loss and the regulariser.
    pub no_ccm: bool,
    /// Replace the pseudo-label loss by plain NT-Xent.
    pub no_ssc: bool,
    pub exclude_self_in_ccl: bool,
    pub literal_reg_sign: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau1: 0.5,
            tau2: 0.5,
            gamma: 1.0,
            no_ccm: false,
            no_ssc: false,
            exclude_self_in_ccl: false,
            literal_reg_sign: false,
        }
    }
}

/// The total objective and the values of its parts. `reg` is the
/// unweighted regulariser; `total = sgc + cc + γ·reg`.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub sgc: f64,
    pub cc: f64,
    pub reg: f64,
}

pub fn total_loss(
    tape: &mut Tape<'_>,
    (m1, m2): (Var, Var),
    (soft1, soft2): (Var, Var),
    sets: &ClusterIndexSets,
    cfg: &LossConfig,
) -> Result<LossTerms> {
    if !(cfg.gamma >= 0.0 && cfg.gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be nonnegative, got {}", cfg.gamma)));
    }
    let sgc = if cfg.no_ssc {
        ntxent_loss(tape, m1, m2, cfg.tau2)?
    } else {
        ssc_loss(tape, m1, m2, sets, cfg.tau2)?
    };
    let sgc_value = tape.scalar_value(sgc);
    if cfg.no_ccm {
        return Ok(LossTerms {
            total: sgc,
            sgc: sgc_value,
            cc: 0.0,
            reg: 0.0,
        });
    }
    let cc = cc_loss(tape, soft1, soft2, cfg.tau1, cfg.exclude_self_in_ccl)?;
    let reg = regularizer(tape, soft1, soft2, cfg.literal_reg_sign);
    let weighted = tape.scale(reg, cfg.gamma);
    let partial = tape.add(sgc, cc);
    let total = tape.add(partial, weighted);
    Ok(LossTerms {
        total,
        sgc: sgc_value,
        cc: tape.scalar_value(cc),
        reg: tape.scalar_value(reg),
    })
}
