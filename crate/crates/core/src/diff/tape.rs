//! Reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node holding its forward value to the [`Tape`].
//! [`Tape::backward`] walks the nodes in reverse order and accumulates the
//! gradient of a scalar (1×1) output with respect to every node. Scalars are
//! represented as 1×1 matrices throughout.
//!
//! Non-finite forward values do not abort the recording; the first offending
//! node is remembered and surfaced by [`Tape::check`] and [`Tape::backward`].

use ndarray::{s, Array2, Axis, Zip};

use super::CsrMatrix;
use crate::{Error, Result};

/// Row-norm floor used by [`Tape::l2_normalize_rows`]; a zero row stays zero.
pub const NORM_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<'a> {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    SpMm(&'a CsrMatrix, Var),
    Relu(Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Log(Var),
    Exp(Var),
    Sum(Var),
    ColSum(Var),
    DivScalar(Var, Var),
    RowSoftmax(Var),
    L2NormalizeRows(Var, Vec<f64>),
    Transpose(Var),
    VCat(Var, Var),
    HCat(Var, Var),
    SliceRows(Var, usize),
    MaskedRowLse(Var, Array2<bool>),
    WeightedSum(Var, Array2<f64>),
}

impl Op<'_> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulBt(..) => "matmul_bt",
            Op::SpMm(..) => "spmm",
            Op::Relu(_) => "relu",
            Op::AddRow(..) => "add_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddConst(..) => "add_const",
            Op::Log(_) => "log",
            Op::Exp(_) => "exp",
            Op::Sum(_) => "sum",
            Op::ColSum(_) => "col_sum",
            Op::DivScalar(..) => "div_scalar",
            Op::RowSoftmax(_) => "row_softmax",
            Op::L2NormalizeRows(..) => "l2_normalize_rows",
            Op::Transpose(_) => "transpose",
            Op::VCat(..) => "vcat",
            Op::HCat(..) => "hcat",
            Op::SliceRows(..) => "slice_rows",
            Op::MaskedRowLse(..) => "masked_row_logsumexp",
            Op::WeightedSum(..) => "weighted_sum",
        }
    }
}

struct Node<'a> {
    value: Array2<f64>,
    op: Op<'a>,
}

/// Gradients of one scalar output with respect to every node of a tape.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` when the output does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Array2<f64>> {
        self.grads[var.0].as_ref()
    }

    pub fn take(&mut self, var: Var) -> Option<Array2<f64>> {
        self.grads[var.0].take()
    }
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    fault: Option<String>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            fault: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op<'a>) -> Var {
        if self.fault.is_none() && !value.iter().all(|v| v.is_finite()) {
            self.fault = Some(format!(
                "non-finite value produced by {} (node {})",
                op.name(),
                self.nodes.len()
            ));
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input matrix. Parameters and constants are both leaves; the
    /// caller decides which leaf gradients to read back.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Array2::from_elem((1, 1), value))
    }

    pub fn value(&self, var: Var) -> &Array2<f64> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> (usize, usize) {
        self.value(var).dim()
    }

    /// Value of a 1×1 node.
    pub fn scalar_value(&self, var: Var) -> f64 {
        let v = self.value(var);
        assert_eq!(v.dim(), (1, 1), "expected a scalar node");
        v[[0, 0]]
    }

    /// Fails if any recorded node holds a non-finite value.
    pub fn check(&self) -> Result<()> {
        match &self.fault {
            Some(msg) => Err(Error::Numeric(msg.clone())),
            None => Ok(()),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.ncols(), vb.nrows(), "matmul shape mismatch");
        let out = va.dot(vb);
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.ncols(), vb.ncols(), "matmul_bt shape mismatch");
        let out = va.dot(&vb.t());
        self.push(out, Op::MatMulBt(a, b))
    }

    /// Sparse (constant) times dense.
    pub fn spmm(&mut self, adj: &'a CsrMatrix, x: Var) -> Var {
        let out = adj.matmul_dense(self.value(x).view());
        self.push(out, Op::SpMm(adj, x))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|v| v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// Adds a 1×m row to every row of an n×m matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (self.value(a), self.value(row));
        assert_eq!(vr.nrows(), 1, "add_row expects a single row");
        assert_eq!(va.ncols(), vr.ncols(), "add_row shape mismatch");
        let out = va + vr;
        self.push(out, Op::AddRow(a, row))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let out = self.value(a) - self.value(b);
        self.push(out, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let out = self.value(a) * self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.push(out, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) + c;
        self.push(out, Op::AddConst(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::ln);
        self.push(out, Op::Log(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::exp);
        self.push(out, Op::Exp(a))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Column sums, as a 1×m row.
    pub fn col_sum(&mut self, a: Var) -> Var {
        let out = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(out, Op::ColSum(a))
    }

    /// Divides every entry of `a` by the scalar node `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Var {
        let d = self.scalar_value(s);
        let out = self.value(a) / d;
        self.push(out, Op::DivScalar(a, s))
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let total = row.sum();
            row.mapv_inplace(|v| v / total);
        }
        self.push(out, Op::RowSoftmax(a))
    }

    /// Scales every row to unit Euclidean norm. Rows with norm below
    /// [`NORM_EPS`] are divided by `NORM_EPS` instead.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let norms: Vec<f64> = va
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt().max(NORM_EPS))
            .collect();
        let mut out = va.clone();
        for (mut row, &n) in out.rows_mut().into_iter().zip(&norms) {
            row /= n;
        }
        self.push(out, Op::L2NormalizeRows(a, norms))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        self.push(out, Op::Transpose(a))
    }

    /// Stacks `a` on top of `b`.
    pub fn vcat(&mut self, a: Var, b: Var) -> Var {
        let out = ndarray::concatenate(Axis(0), &[self.value(a).view(), self.value(b).view()])
            .expect("vcat shape mismatch");
        self.push(out, Op::VCat(a, b))
    }

    /// Places `b` to the right of `a`.
    pub fn hcat(&mut self, a: Var, b: Var) -> Var {
        let out = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("hcat shape mismatch");
        self.push(out, Op::HCat(a, b))
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice(s![start..end, ..]).to_owned();
        self.push(out, Op::SliceRows(a, start))
    }

    /// Per-row `log Σ_{j : mask[i,j]} exp(a[i,j])`, as an n×1 column. Every row
    /// of the mask must select at least one entry.
    pub fn masked_row_logsumexp(&mut self, a: Var, mask: Array2<bool>) -> Var {
        let va = self.value(a);
        assert_eq!(va.dim(), mask.dim(), "mask shape mismatch");
        let mut out = Array2::zeros((va.nrows(), 1));
        for (i, (row, mrow)) in va.rows().into_iter().zip(mask.rows()).enumerate() {
            out[[i, 0]] = masked_lse(row.iter().copied(), mrow.iter().copied());
        }
        self.push(out, Op::MaskedRowLse(a, mask))
    }

    /// `Σ weights ⊙ a` with constant weights, as a scalar.
    pub fn weighted_sum(&mut self, a: Var, weights: Array2<f64>) -> Var {
        let va = self.value(a);
        assert_eq!(va.dim(), weights.dim(), "weight shape mismatch");
        let total = Zip::from(va)
            .and(&weights)
            .fold(0.0, |acc, &x, &w| acc + x * w);
        self.push(Array2::from_elem((1, 1), total), Op::WeightedSum(a, weights))
    }

    /// Row-wise cosine similarity matrix between the rows of `a` and `b`.
    pub fn cosine_sim_matrix(&mut self, a: Var, b: Var) -> Var {
        let na = self.l2_normalize_rows(a);
        let nb = self.l2_normalize_rows(b);
        self.matmul_bt(na, nb)
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        self.check()?;
        assert_eq!(
            self.value(output).dim(),
            (1, 1),
            "backward requires a scalar output"
        );
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMulBt(a, b) => {
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::SpMm(adj, x) => {
                    accumulate(&mut grads, *x, adj.transpose_matmul_dense(g.view()));
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gv, &x| {
                            if x <= 0.0 {
                                *gv = 0.0;
                            }
                        });
                    accumulate(&mut grads, *a, ga);
                }
                Op::AddRow(a, row) => {
                    let grow = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *row, grow);
                    accumulate(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, -&g);
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g * *c),
                Op::AddConst(a) => accumulate(&mut grads, *a, g),
                Op::Log(a) => {
                    let ga = g / self.value(*a);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g * &node.value;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let ga = Array2::from_elem(self.shape(*a), g[[0, 0]]);
                    accumulate(&mut grads, *a, ga);
                }
                Op::ColSum(a) => {
                    let (n, _) = self.shape(*a);
                    let ga = g
                        .broadcast((n, g.ncols()))
                        .expect("col_sum gradient broadcast")
                        .to_owned();
                    accumulate(&mut grads, *a, ga);
                }
                Op::DivScalar(a, s) => {
                    let d = self.scalar_value(*s);
                    let va = self.value(*a);
                    let gs = -Zip::from(&g).and(va).fold(0.0, |acc, &gv, &x| acc + gv * x) / (d * d);
                    accumulate(&mut grads, *s, Array2::from_elem((1, 1), gs));
                    accumulate(&mut grads, *a, g / d);
                }
                Op::RowSoftmax(a) => {
                    let y = &node.value;
                    let mut ga = g;
                    for (mut grow, yrow) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot = grow.dot(&yrow);
                        Zip::from(&mut grow)
                            .and(&yrow)
                            .for_each(|gv, &yv| *gv = yv * (*gv - dot));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::L2NormalizeRows(a, norms) => {
                    let y = &node.value;
                    let mut ga = g;
                    for ((mut grow, yrow), &n) in
                        ga.rows_mut().into_iter().zip(y.rows()).zip(norms)
                    {
                        if n > NORM_EPS {
                            let dot = grow.dot(&yrow);
                            Zip::from(&mut grow)
                                .and(&yrow)
                                .for_each(|gv, &yv| *gv = (*gv - yv * dot) / n);
                        } else {
                            grow /= n;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.t().to_owned()),
                Op::VCat(a, b) => {
                    let split = self.shape(*a).0;
                    accumulate(&mut grads, *a, g.slice(s![..split, ..]).to_owned());
                    accumulate(&mut grads, *b, g.slice(s![split.., ..]).to_owned());
                }
                Op::HCat(a, b) => {
                    let split = self.shape(*a).1;
                    accumulate(&mut grads, *a, g.slice(s![.., ..split]).to_owned());
                    accumulate(&mut grads, *b, g.slice(s![.., split..]).to_owned());
                }
                Op::SliceRows(a, start) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    ga.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    accumulate(&mut grads, *a, ga);
                }
                Op::MaskedRowLse(a, mask) => {
                    let va = self.value(*a);
                    let mut ga = Array2::zeros(va.dim());
                    for i in 0..va.nrows() {
                        let lse = node.value[[i, 0]];
                        let gi = g[[i, 0]];
                        for j in 0..va.ncols() {
                            if mask[[i, j]] {
                                ga[[i, j]] = gi * (va[[i, j]] - lse).exp();
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::WeightedSum(a, weights) => {
                    accumulate(&mut grads, *a, weights * g[[0, 0]]);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], var: Var, g: Array2<f64>) {
    match &mut grads[var.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

/// Overflow-safe `log Σ exp(x)` over the entries selected by `mask`.
pub fn masked_lse(values: impl Iterator<Item = f64> + Clone, mask: impl Iterator<Item = bool> + Clone) -> f64 {
    let mut selected = 0usize;
    let mut max = f64::NEG_INFINITY;
    for (v, _) in values.clone().zip(mask.clone()).filter(|&(_, m)| m) {
        if v.is_nan() {
            // Propagate so the tape reports a non-finite value.
            return f64::NAN;
        }
        selected += 1;
        max = max.max(v);
    }
    assert!(selected > 0, "logsumexp over an empty selection");
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let total: f64 = values
        .zip(mask)
        .filter(|&(_, m)| m)
        .map(|(v, _)| (v - max).exp())
        .sum();
    max + total.ln()
}

/// Overflow-safe `log Σ exp(x)`.
pub fn logsumexp(values: &[f64]) -> f64 {
    masked_lse(values.iter().copied(), std::iter::repeat(true).take(values.len()))
}
