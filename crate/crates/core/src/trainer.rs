//! End-to-end training: contrastive pretraining, pseudo-label initialisation,
//! the joint optimisation loop with periodic pseudo-label refresh, and final
//! label extraction from the unperturbed graph.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::augment::{sample_view, AugmentationSpec};
use crate::diff::{Adam, AdamConfig, Tape};
use crate::graph::AttributedGraph;
use crate::losses::{ntxent_loss, total_loss, ClusterIndexSets, LossConfig};
use crate::metrics::{self, kmeans};
use crate::model::{self, embed_on_tape, forward_on_tape, forward_raw, ModelDims, ModelParams, Widths};
use crate::{seed, Error, Result};

const STREAM_INIT: u64 = 0;
const STREAM_PRETRAIN: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_KMEANS: u64 = 3;

const KMEANS_MAX_ITERS: usize = 300;
const KMEANS_RESEEDS: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    /// Base edge-drop rate for view 1 and view 2.
    pub edge_drop: [f64; 2],
    /// Base attribute-mask rate for view 1 and view 2.
    pub attr_mask: [f64; 2],
    pub cap: f64,
    pub adaptive: bool,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        let d = AugmentationSpec::default();
        Self {
            edge_drop: [d.edge_drop_rate; 2],
            attr_mask: [d.attr_mask_rate; 2],
            cap: d.prob_cap,
            adaptive: d.adaptive,
        }
    }
}

impl AugmentationConfig {
    pub fn spec(&self, view: usize) -> AugmentationSpec {
        AugmentationSpec {
            edge_drop_rate: self.edge_drop[view],
            attr_mask_rate: self.attr_mask[view],
            prob_cap: self.cap,
            adaptive: self.adaptive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Train without the clustering head; labels come from k-means on `M`.
    pub no_ccm: bool,
    /// Replace the pseudo-label contrastive loss by NT-Xent.
    pub no_ssc: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitLabels {
    /// Argmax of the clustering head on the raw graph.
    ForwardArgmax,
    /// k-means on the projection-head embeddings of the raw graph.
    #[default]
    KmeansOnM,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Number of clusters; 0 means "take it from the graph's labels".
    pub k: usize,
    pub tau1: f64,
    pub tau2: f64,
    pub gamma: f64,
    pub lr: f64,
    pub t_max: usize,
    pub pretrain_steps: usize,
    pub label_refresh_period: usize,
    pub widths: Widths,
    pub relu_second_layer: bool,
    pub augmentation: AugmentationConfig,
    pub seed: u64,
    pub ablation: Ablation,
    pub init_labels: InitLabels,
    pub exclude_self_in_ccl: bool,
    pub literal_reg_sign: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let losses = LossConfig::default();
        Self {
            k: 0,
            tau1: losses.tau1,
            tau2: losses.tau2,
            gamma: losses.gamma,
            lr: 1e-3,
            t_max: 400,
            pretrain_steps: 200,
            label_refresh_period: 5,
            widths: Widths::default(),
            relu_second_layer: true,
            augmentation: AugmentationConfig::default(),
            seed: 0,
            ablation: Ablation::default(),
            init_labels: InitLabels::default(),
            exclude_self_in_ccl: false,
            literal_reg_sign: false,
        }
    }
}

impl TrainConfig {
    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            tau1: self.tau1,
            tau2: self.tau2,
            gamma: self.gamma,
            no_ccm: self.ablation.no_ccm,
            no_ssc: self.ablation.no_ssc,
            exclude_self_in_ccl: self.exclude_self_in_ccl,
            literal_reg_sign: self.literal_reg_sign,
        }
    }

    /// Cluster count, falling back to the graph's label count when `k` is 0.
    pub fn resolve_k(&self, graph: &AttributedGraph) -> Result<usize> {
        let k = if self.k == 0 {
            graph.n_label_classes().ok_or_else(|| {
                Error::InvalidArgument("k is not set and the graph has no labels".into())
            })?
        } else {
            self.k
        };
        if k < 2 {
            return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
        }
        if k > graph.n_nodes() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} exceeds the node count {}",
                graph.n_nodes()
            )));
        }
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.tau1) || !positive(self.tau2) {
            return Err(Error::InvalidArgument("temperatures must be positive".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument("gamma must be nonnegative".into()));
        }
        if !positive(self.lr) {
            return Err(Error::InvalidArgument("lr must be positive".into()));
        }
        if self.label_refresh_period == 0 {
            return Err(Error::InvalidArgument("label_refresh_period must be at least 1".into()));
        }
        for v in 0..2 {
            self.augmentation.spec(v).validate()?;
        }
        Ok(())
    }

    pub fn model_dims(&self, graph: &AttributedGraph) -> Result<ModelDims> {
        Ok(ModelDims {
            attr_dim: graph.attr_dim(),
            k: self.resolve_k(graph)?,
            widths: self.widths,
            relu_second_layer: self.relu_second_layer,
        })
    }
}

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub total: f64,
    pub sgc: f64,
    pub cc: f64,
    pub reg: f64,
    /// Pseudo-label scores against ground truth, filled on refresh steps.
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub params: ModelParams,
    /// NT-Xent value at each pretraining step, before its update.
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub labels: Vec<usize>,
    pub initial_labels: Vec<usize>,
    pub history: Vec<StepRecord>,
    pub pretrain_losses: Vec<f64>,
}

fn view_seed(cfg: &TrainConfig, stream: u64, step: usize, view: usize) -> u64 {
    seed::derive(cfg.seed, &[stream, step as u64, view as u64])
}

/// Initialises the model and runs `pretrain_steps` NT-Xent updates of the
/// encoder and projection head. The clustering head is left untouched.
pub fn pretrain(graph: &AttributedGraph, cfg: &TrainConfig) -> Result<Pretrained> {
    cfg.validate()?;
    let dims = cfg.model_dims(graph)?;
    let mut params = ModelParams::init(dims, seed::derive(cfg.seed, &[STREAM_INIT]))?;
    let mut adam = Adam::new(AdamConfig::default());
    let mut losses = Vec::with_capacity(cfg.pretrain_steps);

    for step in 0..cfg.pretrain_steps {
        let v1 = sample_view(graph, &cfg.augmentation.spec(0), view_seed(cfg, STREAM_PRETRAIN, step, 0));
        let v2 = sample_view(graph, &cfg.augmentation.spec(1), view_seed(cfg, STREAM_PRETRAIN, step, 1));
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let (_, _, m1) = embed_on_tape(&mut tape, &params, &vars, &v1)?;
        let (_, _, m2) = embed_on_tape(&mut tape, &params, &vars, &v2)?;
        let loss = ntxent_loss(&mut tape, m1, m2, cfg.tau2)?;
        let grads = tape
            .backward(loss)
            .map_err(|e| Error::Numeric(format!("pretraining step {step}: {e}")))?;
        losses.push(tape.scalar_value(loss));
        params.accumulate(&grads, &vars)?;
        adam.step(&mut params.representation_tensors_mut(), cfg.lr);
    }
    Ok(Pretrained { params, losses })
}

/// k-means on the row-normalised embeddings `M` of the raw graph. Retries with
/// fresh seeds while any cluster comes back empty.
fn kmeans_on_embeddings(graph: &AttributedGraph, params: &ModelParams, salt: u64, base_seed: u64) -> Result<Vec<usize>> {
    let mut m = forward_raw(graph, params)?.m;
    normalize_rows(&mut m);
    let k = params.dims.k;
    for attempt in 0..KMEANS_RESEEDS {
        let km = kmeans(m.view(), k, seed::derive(base_seed, &[STREAM_KMEANS, salt, attempt]), KMEANS_MAX_ITERS)?;
        if km.cluster_sizes().iter().all(|&s| s > 0) {
            return Ok(km.labels);
        }
    }
    Err(Error::Numeric(format!(
        "k-means left a cluster empty after {KMEANS_RESEEDS} seeds"
    )))
}

fn normalize_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let norm = row.dot(&row).sqrt().max(crate::diff::NORM_EPS);
        row /= norm;
    }
}

/// Initial pseudo labels from a pretrained model.
pub fn init_pseudo_labels(graph: &AttributedGraph, params: &ModelParams, cfg: &TrainConfig) -> Result<Vec<usize>> {
    match cfg.init_labels {
        InitLabels::ForwardArgmax => refresh_pseudo_labels(graph, params),
        InitLabels::KmeansOnM => kmeans_on_embeddings(graph, params, 0, cfg.seed),
    }
}

/// Labels read off the clustering head on the unperturbed graph.
pub fn refresh_pseudo_labels(graph: &AttributedGraph, params: &ModelParams) -> Result<Vec<usize>> {
    model::predict_oos(graph, params)
}

fn current_labels(graph: &AttributedGraph, params: &ModelParams, cfg: &TrainConfig, step: usize) -> Result<Vec<usize>> {
    if cfg.ablation.no_ccm {
        kmeans_on_embeddings(graph, params, step as u64 + 1, cfg.seed)
    } else {
        refresh_pseudo_labels(graph, params)
    }
}

/// Runs pretraining, pseudo-label initialisation and `t_max` joint updates.
pub fn train(graph: &AttributedGraph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let Pretrained {
        mut params,
        losses: pretrain_losses,
    } = pretrain(graph, cfg)?;
    let initial_labels = init_pseudo_labels(graph, &params, cfg)?;
    let mut pseudo = initial_labels.clone();
    let loss_cfg = cfg.loss_config();
    let mut adam = Adam::new(AdamConfig::default());
    let mut history = Vec::with_capacity(cfg.t_max);

    for step in 1..=cfg.t_max {
        let v1 = sample_view(graph, &cfg.augmentation.spec(0), view_seed(cfg, STREAM_TRAIN, step, 0));
        let v2 = sample_view(graph, &cfg.augmentation.spec(1), view_seed(cfg, STREAM_TRAIN, step, 1));
        let sets = ClusterIndexSets::new(&pseudo);

        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let o1 = forward_on_tape(&mut tape, &params, &vars, &v1)?;
        let o2 = forward_on_tape(&mut tape, &params, &vars, &v2)?;
        let terms = total_loss(&mut tape, (o1.m, o2.m), (o1.soft, o2.soft), &sets, &loss_cfg)?;
        let grads = tape.backward(terms.total).map_err(|e| {
            Error::Numeric(format!(
                "step {step}: {e} (sgc {}, cc {}, reg {})",
                terms.sgc, terms.cc, terms.reg
            ))
        })?;
        params.accumulate(&grads, &vars)?;
        adam.step(&mut params.tensors_mut(), cfg.lr);

        let mut record = StepRecord {
            step,
            total: tape.scalar_value(terms.total),
            sgc: terms.sgc,
            cc: terms.cc,
            reg: terms.reg,
            acc: None,
            nmi: None,
        };
        if step % cfg.label_refresh_period == 0 {
            pseudo = current_labels(graph, &params, cfg, step)?;
            if let Some(truth) = graph.labels() {
                record.acc = Some(metrics::acc(&pseudo, truth)?);
                record.nmi = Some(metrics::nmi(&pseudo, truth)?);
            }
        }
        history.push(record);
    }

    let labels = if cfg.t_max == 0 {
        initial_labels.clone()
    } else {
        current_labels(graph, &params, cfg, cfg.t_max + 1)?
    };
    Ok(TrainOutcome {
        params,
        labels,
        initial_labels,
        history,
        pretrain_losses,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// Writes `step,total,sgc,cc,reg,acc,nmi`; acc/nmi are blank when unknown.
pub fn write_history_csv(path: &Path, history: &[StepRecord]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "step,total,sgc,cc,reg,acc,nmi").map_err(io)?;
    for r in history {
        writeln!(
            w,
            "{},{:.4},{:.4},{:.4},{:.4},{},{}",
            r.step,
            r.total,
            r.sgc,
            r.cc,
            r.reg,
            fmt_opt(r.acc),
            fmt_opt(r.nmi)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
