//! Slow, direct re-implementations used as test oracles.

use ndarray::Array2;

fn entropy_of(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let max = labels.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max + 1];
    for &l in labels {
        counts[l] += 1;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// NMI with geometric normalisation from a freshly tallied joint histogram.
pub fn nmi(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let hp = entropy_of(pred);
    let ht = entropy_of(truth);
    if hp == 0.0 && ht == 0.0 {
        return 1.0;
    }
    if hp == 0.0 || ht == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    let kp = pred.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    for a in 0..kp {
        for b in 0..kt {
            let nab = pred.iter().zip(truth).filter(|&(&p, &t)| p == a && t == b).count() as f64;
            if nab == 0.0 {
                continue;
            }
            let na = pred.iter().filter(|&&p| p == a).count() as f64;
            let nb = truth.iter().filter(|&&t| t == b).count() as f64;
            mi += nab / n * (n * nab / (na * nb)).ln();
        }
    }
    (mi / (hp * ht).sqrt()).clamp(0.0, 1.0)
}

/// ARI from explicit pair counting.
pub fn ari(pred: &[usize], truth: &[usize]) -> f64 {
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            match (pred[i] == pred[j], truth[i] == truth[j]) {
                (true, true) => a += 1.0,
                (true, false) => b += 1.0,
                (false, true) => c += 1.0,
                (false, false) => d += 1.0,
            }
        }
    }
    let denom = (a + b) * (b + d) + (a + c) * (c + d);
    if denom == 0.0 {
        return 1.0;
    }
    2.0 * (a * d - b * c) / denom
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Minimum assignment cost over all K! permutations.
pub fn min_assignment_cost(cost: &Array2<f64>) -> f64 {
    permutations(cost.nrows())
        .iter()
        .map(|p| p.iter().enumerate().map(|(r, &c)| cost[[r, c]]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Best accuracy over every injective relabeling of predicted clusters.
pub fn acc(pred: &[usize], truth: &[usize]) -> f64 {
    let k = pred.iter().chain(truth).max().unwrap() + 1;
    permutations(k)
        .iter()
        .map(|p| pred.iter().zip(truth).filter(|&(&a, &b)| p[a] == b).count())
        .max()
        .unwrap() as f64
        / pred.len() as f64
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[[i, i]]).collect()
}

fn cos(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
}

fn view_row(m1: &Array2<f64>, m2: &Array2<f64>, view: usize, i: usize) -> ndarray::Array1<f64> {
    if view == 0 { m1.row(i).to_owned() } else { m2.row(i).to_owned() }
}

/// Pseudo-label contrastive loss written term by term.
pub fn ssc(m1: &Array2<f64>, m2: &Array2<f64>, labels: &[usize], tau: f64) -> f64 {
    let n = m1.nrows();
    let s = |a: usize, i: usize, b: usize, j: usize| cos(view_row(m1, m2, a, i).view(), view_row(m1, m2, b, j).view()) / tau;
    let mut total = 0.0;
    for i in 0..n {
        let mut d = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                for q in (0..n).filter(|&q| q != i) {
                    d += s(a, i, b, q).exp();
                }
            }
        }
        let same: Vec<usize> = (0..n).filter(|&t| labels[t] == labels[i]).collect();
        let mut li = 0.0;
        for &t in &same {
            for a in 0..2 {
                for b in 0..2 {
                    if t == i && a == b {
                        continue;
                    }
                    li += (s(a, i, b, t).exp() / d).ln();
                }
            }
        }
        total += -li / same.len() as f64;
    }
    total
}

/// Cluster-level contrastive loss over the columns of two soft assignments.
pub fn cc(s1: &Array2<f64>, s2: &Array2<f64>, tau: f64) -> f64 {
    let k = s1.ncols();
    let term = |a: &Array2<f64>, b: &Array2<f64>, c: usize| {
        let pos = (cos(a.column(c), b.column(c)) / tau).exp();
        let denom: f64 = (0..k)
            .map(|j| (cos(a.column(c), a.column(j)) / tau).exp() + (cos(a.column(c), b.column(j)) / tau).exp())
            .sum();
        -(pos / denom).ln()
    };
    (0..k).map(|c| term(s1, s2, c) + term(s2, s1, c)).sum::<f64>() / (2 * k) as f64
}

/// Σ over views of Σ_k ρ_k ln ρ_k with ρ the normalised column mass.
pub fn regularizer(s1: &Array2<f64>, s2: &Array2<f64>) -> f64 {
    [s1, s2]
        .iter()
        .map(|s| {
            let total = s.sum();
            s.columns().into_iter().map(|c| {
                let rho = c.sum() / total;
                rho * (rho + 1e-12).ln()
            }).sum::<f64>()
        })
        .sum()
}

/// Per-anchor NT-Xent denominators `E[(i, α)]` (all instances except the anchor).
pub fn ntxent_denominators(m1: &Array2<f64>, m2: &Array2<f64>, tau: f64) -> Array2<f64> {
    let n = m1.nrows();
    Array2::from_shape_fn((n, 2), |(i, a)| {
        let mut e = 0.0;
        for b in 0..2 {
            for q in 0..n {
                if q == i && a == b {
                    continue;
                }
                e += (cos(view_row(m1, m2, a, i).view(), view_row(m1, m2, b, q).view()) / tau).exp();
            }
        }
        e
    })
}

pub fn ntxent(m1: &Array2<f64>, m2: &Array2<f64>, tau: f64) -> f64 {
    let n = m1.nrows();
    let e = ntxent_denominators(m1, m2, tau);
    let mut total = 0.0;
    for i in 0..n {
        let pos = cos(m1.row(i), m2.row(i)) / tau;
        total += 2.0 * -pos + e[[i, 0]].ln() + e[[i, 1]].ln();
    }
    total / (2 * n) as f64
}
