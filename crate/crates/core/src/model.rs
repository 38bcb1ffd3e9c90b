//! The clustering network: a shared two-layer GCN encoder followed by a
//! projection head (node embeddings for contrastive learning) and a
//! clustering head (soft cluster assignments).
//!
//! Weights are stored input-major, so a layer computes `X · W + b`.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::GraphView;
use crate::diff::{CsrMatrix, Gradients, ParamTensor, Tape, Var};
use crate::graph::AttributedGraph;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Widths {
    /// Output width of the first GCN layer.
    pub hidden: usize,
    /// Output width of the encoder.
    pub embed: usize,
    pub proj_hidden: usize,
    pub proj_out: usize,
    pub cluster_hidden: usize,
}

impl Default for Widths {
    fn default() -> Self {
        Self {
            hidden: 256,
            embed: 256,
            proj_hidden: 256,
            proj_out: 128,
            cluster_hidden: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub attr_dim: usize,
    pub k: usize,
    pub widths: Widths,
    /// Apply ReLU after the second GCN layer too.
    pub relu_second_layer: bool,
}

/// Two fully connected layers with a ReLU in between and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: ParamTensor,
    pub b1: ParamTensor,
    pub w2: ParamTensor,
    pub b2: ParamTensor,
}

impl Mlp {
    fn init(input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            w1: ParamTensor::new(glorot(input, hidden, rng)),
            b1: ParamTensor::new(Array2::zeros((1, hidden))),
            w2: ParamTensor::new(glorot(hidden, output, rng)),
            b2: ParamTensor::new(Array2::zeros((1, output))),
        }
    }

    fn tensors_mut(&mut self) -> [&mut ParamTensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn register(&self, tape: &mut Tape<'_>) -> MlpVars {
        MlpVars {
            w1: tape.leaf(self.w1.value.clone()),
            b1: tape.leaf(self.b1.value.clone()),
            w2: tape.leaf(self.w2.value.clone()),
            b2: tape.leaf(self.b2.value.clone()),
        }
    }

    fn accumulate(&mut self, grads: &Gradients, vars: &MlpVars) -> Result<()> {
        accumulate_one(&mut self.w1, grads, vars.w1)?;
        accumulate_one(&mut self.b1, grads, vars.b1)?;
        accumulate_one(&mut self.w2, grads, vars.w2)?;
        accumulate_one(&mut self.b2, grads, vars.b2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub omega1: ParamTensor,
    pub omega2: ParamTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub encoder: EncoderParams,
    /// Projection head.
    pub phi: Mlp,
    /// Clustering head.
    pub psi: Mlp,
}

/// Glorot-uniform `fan_in × fan_out` matrix.
pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..=bound))
}

fn accumulate_one(p: &mut ParamTensor, grads: &Gradients, var: Var) -> Result<()> {
    match grads.get(var) {
        Some(g) => p.accumulate(g),
        None => Ok(()),
    }
}

impl ModelParams {
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        let w = dims.widths;
        if [dims.attr_dim, dims.k, w.hidden, w.embed, w.proj_hidden, w.proj_out, w.cluster_hidden]
            .contains(&0)
        {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        let mut rng = seed::rng(seed);
        let encoder = EncoderParams {
            omega1: ParamTensor::new(glorot(dims.attr_dim, w.hidden, &mut rng)),
            omega2: ParamTensor::new(glorot(w.hidden, w.embed, &mut rng)),
        };
        let phi = Mlp::init(w.embed, w.proj_hidden, w.proj_out, &mut rng);
        let psi = Mlp::init(w.embed, w.cluster_hidden, dims.k, &mut rng);
        Ok(Self {
            dims,
            encoder,
            phi,
            psi,
        })
    }

    /// Every tensor in a fixed order: Ω¹, Ω², φ (4), ψ (4).
    pub fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = vec![&mut self.encoder.omega1, &mut self.encoder.omega2];
        out.extend(self.phi.tensors_mut());
        out.extend(self.psi.tensors_mut());
        out
    }

    /// Encoder and projection head only.
    pub fn representation_tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = vec![&mut self.encoder.omega1, &mut self.encoder.omega2];
        out.extend(self.phi.tensors_mut());
        out
    }

    pub fn register(&self, tape: &mut Tape<'_>) -> ParamVars {
        ParamVars {
            omega1: tape.leaf(self.encoder.omega1.value.clone()),
            omega2: tape.leaf(self.encoder.omega2.value.clone()),
            phi: self.phi.register(tape),
            psi: self.psi.register(tape),
        }
    }

    /// Adds the gradients recorded for `vars` into each tensor's `grad`.
    pub fn accumulate(&mut self, grads: &Gradients, vars: &ParamVars) -> Result<()> {
        accumulate_one(&mut self.encoder.omega1, grads, vars.omega1)?;
        accumulate_one(&mut self.encoder.omega2, grads, vars.omega2)?;
        self.phi.accumulate(grads, &vars.phi)?;
        self.psi.accumulate(grads, &vars.psi)
    }

    pub fn check_graph(&self, graph: &AttributedGraph) -> Result<()> {
        if graph.attr_dim() != self.dims.attr_dim {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} attribute dimensions, model expects {}",
                graph.attr_dim(),
                self.dims.attr_dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// Tape handles of every model parameter.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub omega1: Var,
    pub omega2: Var,
    pub phi: MlpVars,
    pub psi: MlpVars,
}

/// Tape handles produced by one forward pass over a view.
#[derive(Debug, Clone, Copy)]
pub struct ViewVars {
    pub z_bar: Var,
    pub z: Var,
    pub m: Var,
    pub logits: Var,
    pub soft: Var,
}

pub fn mlp_on_tape(tape: &mut Tape<'_>, input: Var, p: &MlpVars) -> Var {
    let h = tape.matmul(input, p.w1);
    let h = tape.add_row(h, p.b1);
    let h = tape.relu(h);
    let o = tape.matmul(h, p.w2);
    tape.add_row(o, p.b2)
}

/// `relu(Â X Ω¹)` then `Â Z̄ Ω²`, with a ReLU on the second layer when enabled.
pub fn encode_on_tape<'a>(
    tape: &mut Tape<'a>,
    vars: &ParamVars,
    attributes: ArrayView2<'_, f64>,
    adj: &'a CsrMatrix,
    relu_second_layer: bool,
) -> (Var, Var) {
    let x = tape.leaf(attributes.to_owned());
    let ax = tape.spmm(adj, x);
    let h1 = tape.matmul(ax, vars.omega1);
    let z_bar = tape.relu(h1);
    let az = tape.spmm(adj, z_bar);
    let h2 = tape.matmul(az, vars.omega2);
    let z = if relu_second_layer { tape.relu(h2) } else { h2 };
    (z_bar, z)
}

fn check_view(params: &ModelParams, view: &GraphView) -> Result<()> {
    if view.attributes.ncols() != params.dims.attr_dim {
        return Err(Error::DimensionMismatch(format!(
            "view has {} attribute dimensions, model expects {}",
            view.attributes.ncols(),
            params.dims.attr_dim
        )));
    }
    Ok(())
}

/// Encoder plus projection head; returns `(Z̄, Z, M)`.
pub fn embed_on_tape<'a>(
    tape: &mut Tape<'a>,
    params: &ModelParams,
    vars: &ParamVars,
    view: &'a GraphView,
) -> Result<(Var, Var, Var)> {
    check_view(params, view)?;
    let (z_bar, z) = encode_on_tape(
        tape,
        vars,
        view.attributes.view(),
        view.normalized.matrix(),
        params.dims.relu_second_layer,
    );
    let m = mlp_on_tape(tape, z, &vars.phi);
    Ok((z_bar, z, m))
}

/// Full forward pass over one view.
pub fn forward_on_tape<'a>(
    tape: &mut Tape<'a>,
    params: &ModelParams,
    vars: &ParamVars,
    view: &'a GraphView,
) -> Result<ViewVars> {
    let (z_bar, z, m) = embed_on_tape(tape, params, vars, view)?;
    let logits = mlp_on_tape(tape, z, &vars.psi);
    let soft = tape.row_softmax(logits);
    Ok(ViewVars {
        z_bar,
        z,
        m,
        logits,
        soft,
    })
}

/// Values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutputs {
    pub z_bar: Array2<f64>,
    pub z: Array2<f64>,
    pub m: Array2<f64>,
    pub soft_assign: Array2<f64>,
}

pub fn forward_view(view: &GraphView, params: &ModelParams) -> Result<ForwardOutputs> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = forward_on_tape(&mut tape, params, &vars, view)?;
    tape.check()?;
    Ok(ForwardOutputs {
        z_bar: tape.value(out.z_bar).clone(),
        z: tape.value(out.z).clone(),
        m: tape.value(out.m).clone(),
        soft_assign: tape.value(out.soft).clone(),
    })
}

/// Forward pass over the unperturbed graph.
pub fn forward_raw(graph: &AttributedGraph, params: &ModelParams) -> Result<ForwardOutputs> {
    params.check_graph(graph)?;
    forward_view(&GraphView::raw(graph), params)
}

/// Encoder outputs `(Z̄, Z)` for a view.
pub fn encode(view: &GraphView, enc: &EncoderParams, relu_second_layer: bool) -> (Array2<f64>, Array2<f64>) {
    let mut tape = Tape::new();
    let omega1 = tape.leaf(enc.omega1.value.clone());
    let omega2 = tape.leaf(enc.omega2.value.clone());
    let x = tape.leaf(view.attributes.clone());
    let ax = tape.spmm(view.normalized.matrix(), x);
    let h1 = tape.matmul(ax, omega1);
    let z_bar = tape.relu(h1);
    let az = tape.spmm(view.normalized.matrix(), z_bar);
    let h2 = tape.matmul(az, omega2);
    let z = if relu_second_layer { tape.relu(h2) } else { h2 };
    (tape.value(z_bar).clone(), tape.value(z).clone())
}

fn mlp_values(input: &Array2<f64>, p: &Mlp) -> Array2<f64> {
    let mut tape = Tape::new();
    let x = tape.leaf(input.clone());
    let vars = p.register(&mut tape);
    let out = mlp_on_tape(&mut tape, x, &vars);
    tape.value(out).clone()
}

/// Projection head: node embeddings `M`.
pub fn project(z: &Array2<f64>, phi: &Mlp) -> Array2<f64> {
    mlp_values(z, phi)
}

/// Clustering head: row-stochastic soft assignments.
pub fn assign(z: &Array2<f64>, psi: &Mlp) -> Array2<f64> {
    let mut tape = Tape::new();
    let logits = tape.leaf(mlp_values(z, psi));
    let soft = tape.row_softmax(logits);
    tape.value(soft).clone()
}

/// Row-wise argmax; ties go to the smallest cluster index.
pub fn discretize(soft: &Array2<f64>) -> Vec<usize> {
    soft.rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                .0
        })
        .collect()
}

/// Labels for a graph never seen in training, from a single forward pass.
pub fn predict_oos(graph: &AttributedGraph, params: &ModelParams) -> Result<Vec<usize>> {
    Ok(discretize(&forward_raw(graph, params)?.soft_assign))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpDocument {
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
}

/// JSON model checkpoint with row-major weight arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    format_version: u32,
    dims: ModelDims,
    omega1: Vec<Vec<f64>>,
    omega2: Vec<Vec<f64>>,
    phi: MlpDocument,
    psi: MlpDocument,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>, shape: (usize, usize), what: &str) -> Result<ParamTensor> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(Error::parse("checkpoint", format!("{what} is not {}x{}", shape.0, shape.1)));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    if !flat.iter().all(|v| v.is_finite()) {
        return Err(Error::parse("checkpoint", format!("{what} has non-finite entries")));
    }
    let value = Array2::from_shape_vec(shape, flat).map_err(|e| Error::parse("checkpoint", e.to_string()))?;
    Ok(ParamTensor::new(value))
}

impl MlpDocument {
    fn from_mlp(m: &Mlp) -> Self {
        Self {
            w1: rows(&m.w1.value),
            b1: m.b1.value.iter().copied().collect(),
            w2: rows(&m.w2.value),
            b2: m.b2.value.iter().copied().collect(),
        }
    }

    fn into_mlp(self, input: usize, hidden: usize, output: usize, what: &str) -> Result<Mlp> {
        Ok(Mlp {
            w1: from_rows(self.w1, (input, hidden), &format!("{what}.w1"))?,
            b1: from_rows(vec![self.b1], (1, hidden), &format!("{what}.b1"))?,
            w2: from_rows(self.w2, (hidden, output), &format!("{what}.w2"))?,
            b2: from_rows(vec![self.b2], (1, output), &format!("{what}.b2"))?,
        })
    }
}

impl Checkpoint {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn from_params(p: &ModelParams) -> Self {
        Self {
            format_version: Self::FORMAT_VERSION,
            dims: p.dims,
            omega1: rows(&p.encoder.omega1.value),
            omega2: rows(&p.encoder.omega2.value),
            phi: MlpDocument::from_mlp(&p.phi),
            psi: MlpDocument::from_mlp(&p.psi),
        }
    }

    pub fn into_params(self) -> Result<ModelParams> {
        if self.format_version != Self::FORMAT_VERSION {
            return Err(Error::parse(
                "checkpoint",
                format!("unsupported format_version {}", self.format_version),
            ));
        }
        let d = self.dims;
        let w = d.widths;
        Ok(ModelParams {
            dims: d,
            encoder: EncoderParams {
                omega1: from_rows(self.omega1, (d.attr_dim, w.hidden), "omega1")?,
                omega2: from_rows(self.omega2, (w.hidden, w.embed), "omega2")?,
            },
            phi: self.phi.into_mlp(w.embed, w.proj_hidden, w.proj_out, "phi")?,
            psi: self.psi.into_mlp(w.embed, w.cluster_hidden, d.k, "psi")?,
        })
    }

    pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&Self::from_params(params))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ModelParams> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Checkpoint = serde_json::from_str(&text)?;
        doc.into_params()
    }
}
