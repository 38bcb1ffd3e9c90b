//! `scagc` command-line driver: synthesise graphs, train, predict, evaluate
//! and run the k-means baseline.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use scagc::graph::{generate_sbm, load_graph, load_labels, write_labels, AttributedGraph, SbmParams};
use scagc::metrics::{kmeans, ClusteringScores};
use scagc::model::{predict_oos, Checkpoint};
use scagc::trainer::{self, write_history_csv, Ablation, InitLabels, TrainConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(scagc::Error),
}

impl From<scagc::Error> for CliError {
    fn from(e: scagc::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numeric() => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Parser)]
#[command(name = "scagc", version, about = "Self-supervised contrastive attributed graph clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an attributed stochastic block model graph.
    Synth(SynthArgs),
    /// Pretrain and train a model, then write labels, checkpoint and history.
    Train(TrainArgs),
    /// Label a graph with a trained checkpoint.
    Predict(PredictArgs),
    /// Score predicted labels against ground truth.
    Eval(EvalArgs),
    /// k-means on raw attributes, scored against ground truth.
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long = "p-in")]
    p_in: f64,
    #[arg(long = "p-out")]
    p_out: f64,
    #[arg(long, default_value_t = 16)]
    attr_dim: usize,
    /// Distance between block attribute means.
    #[arg(long)]
    sep: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    None,
    NoCcm,
    NoSsc,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    KmeansOnM,
    ForwardArgmax,
}

#[derive(Args)]
struct TrainArgs {
    /// Run config JSON: training options plus optional edges/attrs/labels/out paths.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    attrs: Option<PathBuf>,
    /// Ground-truth labels; enables metrics in the history and summary.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    pretrain_steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    tau1: Option<f64>,
    #[arg(long)]
    tau2: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    ablation: Option<AblationArg>,
    #[arg(long, value_enum)]
    init_labels: Option<InitArg>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    attrs: PathBuf,
    /// Labels file to write.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Also write the metrics JSON here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    attrs: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Number of clusters; defaults to the number of label classes.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values always serialise") + "\n"
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let params = SbmParams {
        n: a.n,
        k: a.k,
        p_in: a.p_in,
        p_out: a.p_out,
        attr_dim: a.attr_dim,
        separation: a.sep,
        noise_sd: a.noise_sd,
        seed: a.seed,
    };
    let graph = generate_sbm(&params)?;
    create_dir(&a.out)?;
    graph.write_edges(&a.out.join("edges.txt"))?;
    graph.write_attributes(&a.out.join("attrs.csv"))?;
    write_labels(&a.out.join("labels.txt"), graph.labels().expect("generated graphs are labelled"))?;
    let manifest = json!({
        "sbm": params,
        "n_edges": graph.n_edges(),
        "files": {"edges": "edges.txt", "attrs": "attrs.csv", "labels": "labels.txt"},
    });
    write_text(&a.out.join("manifest.json"), &pretty(&manifest))?;
    println!("wrote {} nodes, {} edges to {}", graph.n_nodes(), graph.n_edges(), a.out.display());
    Ok(())
}

struct RunPaths {
    edges: Option<PathBuf>,
    attrs: Option<PathBuf>,
    labels: Option<PathBuf>,
    out: Option<PathBuf>,
}

/// Splits a run config into its path keys and a strictly parsed `TrainConfig`.
fn read_run_config(path: &Path) -> CliResult<(RunPaths, TrainConfig)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let Value::Object(mut map) = value else {
        return usage(format!("{}: config must be a JSON object", path.display()));
    };
    let mut take = |key: &str| -> CliResult<Option<PathBuf>> {
        match map.remove(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(PathBuf::from(s))),
            Some(other) => usage(format!("config key {key:?} must be a path string, got {other}")),
        }
    };
    let paths = RunPaths {
        edges: take("edges")?,
        attrs: take("attrs")?,
        labels: take("labels")?,
        out: take("out")?,
    };
    let cfg = serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok((paths, cfg))
}

fn apply_overrides(cfg: &mut TrainConfig, a: &TrainArgs) {
    if let Some(v) = a.k {
        cfg.k = v;
    }
    if let Some(v) = a.t_max {
        cfg.t_max = v;
    }
    if let Some(v) = a.pretrain_steps {
        cfg.pretrain_steps = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.tau1 {
        cfg.tau1 = v;
    }
    if let Some(v) = a.tau2 {
        cfg.tau2 = v;
    }
    if let Some(v) = a.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.ablation {
        cfg.ablation = match v {
            AblationArg::None => Ablation::default(),
            AblationArg::NoCcm => Ablation { no_ccm: true, no_ssc: false },
            AblationArg::NoSsc => Ablation { no_ccm: false, no_ssc: true },
        };
    }
    if let Some(v) = a.init_labels {
        cfg.init_labels = match v {
            InitArg::KmeansOnM => InitLabels::KmeansOnM,
            InitArg::ForwardArgmax => InitLabels::ForwardArgmax,
        };
    }
}

fn train(a: TrainArgs) -> CliResult<()> {
    let (file_paths, mut cfg) = match &a.config {
        Some(p) => read_run_config(p)?,
        None => (
            RunPaths {
                edges: None,
                attrs: None,
                labels: None,
                out: None,
            },
            TrainConfig::default(),
        ),
    };
    apply_overrides(&mut cfg, &a);
    let edges = a.edges.clone().or(file_paths.edges);
    let attrs = a.attrs.clone().or(file_paths.attrs);
    let labels = a.labels.clone().or(file_paths.labels);
    let out = a.out.clone().or(file_paths.out);
    let (Some(edges), Some(attrs), Some(out)) = (edges, attrs, out) else {
        return usage("train needs --edges, --attrs and --out (as flags or config keys)");
    };

    let graph = load_graph(&edges, &attrs, labels.as_deref())?;
    create_dir(&out)?;
    let mut echo = match serde_json::to_value(&cfg).expect("config serialises") {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    let path_value = |p: &Path| Value::String(p.display().to_string());
    echo.insert("edges".into(), path_value(&edges));
    echo.insert("attrs".into(), path_value(&attrs));
    echo.insert("labels".into(), labels.as_deref().map_or(Value::Null, path_value));
    echo.insert("out".into(), path_value(&out));
    write_text(&out.join("config.json"), &pretty(&Value::Object(echo)))?;

    let outcome = trainer::train(&graph, &cfg)?;
    Checkpoint::save(&outcome.params, &out.join("checkpoint.json"))?;
    write_labels(&out.join("labels.txt"), &outcome.labels)?;
    write_history_csv(&out.join("history.csv"), &outcome.history)?;
    println!("trained {} steps; outputs in {}", cfg.t_max, out.display());
    if let Some(truth) = graph.labels() {
        let scores = ClusteringScores::compute(&outcome.labels, truth)?;
        let text = scores.to_json_4dp();
        write_text(&out.join("metrics.json"), &format!("{text}\n"))?;
        println!("{text}");
    }
    Ok(())
}

fn predict(a: PredictArgs) -> CliResult<()> {
    let params = Checkpoint::load(&a.checkpoint)?;
    let graph = load_graph(&a.edges, &a.attrs, None)?;
    let labels = predict_oos(&graph, &params)?;
    write_labels(&a.output, &labels)?;
    println!("labelled {} nodes into {}", labels.len(), a.output.display());
    Ok(())
}

fn emit_scores(scores: &ClusteringScores, output: Option<&Path>) -> CliResult<()> {
    let text = scores.to_json_4dp();
    if let Some(path) = output {
        write_text(path, &format!("{text}\n"))?;
    }
    println!("{text}");
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let pred = load_labels(&a.pred)?;
    let truth = load_labels(&a.truth)?;
    if pred.len() != truth.len() {
        return usage(format!("{} has {} labels but {} has {}", a.pred.display(), pred.len(), a.truth.display(), truth.len()));
    }
    emit_scores(&ClusteringScores::compute(&pred, &truth)?, a.output.as_deref())
}

fn baseline(a: BaselineArgs) -> CliResult<()> {
    let graph: AttributedGraph = load_graph(&a.edges, &a.attrs, Some(&a.labels))?;
    let truth = graph.labels().expect("labels were loaded");
    let k = a.k.or(graph.n_label_classes()).unwrap_or(0);
    let km = kmeans(graph.attributes().view(), k, a.seed, 300)?;
    emit_scores(&ClusteringScores::compute(&km.labels, truth)?, a.output.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Baseline(a) => baseline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
