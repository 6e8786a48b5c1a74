//! The `evgraph` command line.
//!
//! Every subcommand resolves a [`RunConfig`] (defaults, then an optional JSON
//! file given with `--config`, then flags), calls into the library and
//! writes a JSON report that embeds the effective configuration. Exit codes:
//! 0 on success, 2 for usage or configuration errors, 1 for failures while
//! running.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::engine::{
    bench_throughput, evaluate, stratified_split, train, BenchReport, Sample, SystemClock, TrainConfig,
};
use crate::events::{
    ingest_dir, load_manifest, load_sample, synth_dataset, write_manifest, ManifestEntry, SynthConfig,
};
use crate::gconv::ConvKind;
use crate::graphbuild::{
    account_memory, build_graph, load_graph, save_graph, EventGraph, GraphParams, MemoryProfile, TimeMode,
};
use crate::models::{Model, ModelSpec, Task};
use crate::ndiff::Activation;
use crate::{Error, Result};

pub const THREADS_ENV: &str = "EVGRAPH_THREADS";
pub const CACHE_INDEX: &str = "index.json";

/// Everything a subcommand may need. Serialized as one JSON object; a file
/// may set any subset of the keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphParams,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub conv: ConvKind,
    pub activation: Activation,
    /// Number of classes; taken from the manifest when unset.
    pub classes: Option<usize>,
    pub train_fraction: f64,
    pub split_seed: u64,
    /// Sensor size assumed by `ingest`.
    pub width: u32,
    pub height: u32,
    pub dataset: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub history: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            graph: GraphParams::default(),
            train: TrainConfig::classification(),
            synth: SynthConfig::default(),
            conv: ConvKind::PointNet,
            activation: Activation::Elu,
            classes: None,
            train_fraction: 0.8,
            split_seed: 0,
            width: 240,
            height: 180,
            dataset: None,
            cache: None,
            checkpoint: None,
            report: None,
            history: None,
        }
    }
}

impl RunConfig {
    /// Overlays a JSON document on `self`. Keys absent from the defaults are
    /// rejected so typos do not pass silently.
    pub fn merge_json(&self, overlay: &Value) -> Result<Self> {
        let mut base = serde_json::to_value(self)?;
        merge_value(&mut base, overlay, "")?;
        serde_json::from_value(base).map_err(|e| Error::config(format!("bad config: {e}")))
    }

    pub fn merge_file(&self, path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::config(format!("config file {} does not exist", path.display())));
        }
        let text = fs::read_to_string(path).map_err(Error::at_path(path))?;
        let overlay: Value = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: not valid JSON: {e}", path.display())))?;
        self.merge_json(&overlay)
    }

    fn require_dataset(&self) -> Result<&Path> {
        let dir = self
            .dataset
            .as_deref()
            .ok_or_else(|| Error::config("this command needs --dataset"))?;
        if !dir.exists() {
            return Err(Error::config(format!("dataset {} does not exist", dir.display())));
        }
        Ok(dir)
    }

    fn require_cache(&self) -> Result<&Path> {
        self.cache.as_deref().ok_or_else(|| Error::config("this command needs --cache"))
    }

    fn require_checkpoint(&self) -> Result<&Path> {
        let path = self
            .checkpoint
            .as_deref()
            .ok_or_else(|| Error::config("this command needs --checkpoint"))?;
        if !path.is_file() {
            return Err(Error::config(format!("checkpoint {} does not exist", path.display())));
        }
        Ok(path)
    }
}

fn merge_value(base: &mut Value, overlay: &Value, at: &str) -> Result<()> {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                match b.get_mut(k) {
                    Some(slot) => merge_value(slot, v, &path)?,
                    None => return Err(Error::config(format!("unknown config key `{path}`"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v.clone();
            Ok(())
        }
    }
}

/// Cache file stem for a sample: SHA-256 over the graph parameters and the
/// sample's path.
pub fn cache_key(params: &GraphParams, sample_path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(params)?);
    h.update([0u8]);
    h.update(sample_path.to_string_lossy().as_bytes());
    Ok(hex::encode(h.finalize().as_slice()))
}

#[derive(Parser, Debug)]
#[command(name = "evgraph", version, about = "Event-camera graph construction, training and profiling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a labelled synthetic dataset.
    Synth(SynthArgs),
    /// Decode a directory of 5-byte event files and write its manifest.
    Ingest(IngestArgs),
    #[command(subcommand)]
    Graph(GraphCommand),
    #[command(subcommand)]
    Train(TrainCommand),
    /// Score a checkpoint on a dataset (accuracy or mAP@0.5).
    Eval(EvalArgs),
    /// Forward-pass throughput on a dataset.
    Bench(BenchArgs),
    /// Parameter table as CSV.
    Params(ParamsArgs),
}

#[derive(Subcommand, Debug)]
enum GraphCommand {
    /// Build and cache one graph per sample.
    Build(GraphBuildArgs),
    /// Memory footprint of cached graphs under storage profiles.
    Profile(ProfileArgs),
}

#[derive(Subcommand, Debug)]
enum TrainCommand {
    /// Train the graph classifier.
    Cls(TrainClsArgs),
    /// Train the single-object detector.
    Det(TrainArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the JSON report here as well as to stdout.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct GraphArgs {
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    max_neighbors: Option<usize>,
    #[arg(long)]
    max_events: Option<usize>,
    /// norm100 or raw
    #[arg(long)]
    time_mode: Option<TimeMode>,
    /// Store Cartesian edge attributes with each graph.
    #[arg(long)]
    edge_attrs: bool,
}

impl GraphArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let g = &mut cfg.graph;
        set(&mut g.radius, self.radius);
        set(&mut g.max_neighbors, self.max_neighbors);
        set(&mut g.max_events, self.max_events);
        set(&mut g.time_mode, self.time_mode);
        g.with_edge_attrs |= self.edge_attrs;
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory.
    #[arg(long, alias = "out")]
    dataset: Option<PathBuf>,
    #[arg(long)]
    classes: Option<u32>,
    #[arg(long)]
    per_class: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    object_scale: Option<f64>,
    #[arg(long)]
    duration_us: Option<u64>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Directory of `.bin` files, optionally one subdirectory per class.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
}

#[derive(Args, Debug)]
struct GraphBuildArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[command(flatten)]
    graph: GraphArgs,
}

#[derive(Args, Debug)]
struct ProfileArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Cache written by `graph build`.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// attr64, lean32 or attr32; repeatable. The ratio is first / second.
    #[arg(long = "profile")]
    profiles: Vec<MemoryProfile>,
    /// Profile a single hypothetical graph instead of a cache.
    #[arg(long, requires = "edges", conflicts_with = "cache")]
    vertices: Option<u64>,
    #[arg(long, requires = "vertices")]
    edges: Option<u64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Reuse or fill a graph cache.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Best-epoch checkpoint path.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Per-epoch CSV; defaults to the report path with a `.csv` extension.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stop once the test metric reaches this value.
    #[arg(long)]
    target_metric: Option<f64>,
    /// One worker per graph within a batch; not bit-reproducible.
    #[arg(long)]
    parallel_batches: bool,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    classes: Option<usize>,
    #[command(flatten)]
    graph: GraphArgs,
}

impl TrainArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_path(&mut cfg.dataset, &self.dataset);
        set_path(&mut cfg.cache, &self.cache);
        set_path(&mut cfg.checkpoint, &self.checkpoint);
        set_path(&mut cfg.history, &self.history);
        let t = &mut cfg.train;
        set(&mut t.epochs, self.epochs);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.learning_rate, self.lr);
        set(&mut t.weight_decay, self.weight_decay);
        set(&mut t.seed, self.seed);
        if self.target_metric.is_some() {
            t.target_metric = self.target_metric;
        }
        t.parallel_batches |= self.parallel_batches;
        set(&mut cfg.train_fraction, self.train_fraction);
        set(&mut cfg.split_seed, self.split_seed);
        if self.classes.is_some() {
            cfg.classes = self.classes;
        }
        self.graph.apply(cfg);
    }
}

#[derive(Args, Debug)]
struct TrainClsArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// gcn, sage, edge, pointnet or spline
    #[arg(long)]
    conv: Option<ConvKind>,
    /// elu or relu
    #[arg(long, value_parser = parse_activation)]
    activation: Option<Activation>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Score every sample instead of the held-out split.
    #[arg(long)]
    all: bool,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[command(flatten)]
    graph: GraphArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Benchmark a trained model; otherwise a freshly initialised one.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// cls or det (ignored with --checkpoint).
    #[arg(long, default_value = "cls")]
    model: ModelChoice,
    #[arg(long)]
    conv: Option<ConvKind>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Use at most this many graphs.
    #[arg(long)]
    limit: Option<usize>,
    #[command(flatten)]
    graph: GraphArgs,
}

#[derive(Args, Debug)]
struct ParamsArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "cls")]
    model: ModelChoice,
    #[arg(long)]
    conv: Option<ConvKind>,
    #[arg(long)]
    classes: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum ModelChoice {
    Cls,
    Det,
}

fn parse_activation(s: &str) -> std::result::Result<Activation, String> {
    match s {
        "elu" => Ok(Activation::Elu),
        "relu" => Ok(Activation::Relu),
        other => Err(format!("unknown activation `{other}` (expected elu or relu)")),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, v: &Option<PathBuf>) {
    if v.is_some() {
        slot.clone_from(v);
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match configure_threads().and_then(|()| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                2
            } else {
                1
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    // a second call in the same process finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn resolve(common: &CommonArgs, defaults: RunConfig) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => defaults.merge_file(path)?,
        None => defaults,
    };
    set_path(&mut cfg.report, &common.report);
    Ok(cfg)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Graph(GraphCommand::Build(a)) => cmd_graph_build(a),
        Command::Graph(GraphCommand::Profile(a)) => cmd_graph_profile(a),
        Command::Train(TrainCommand::Cls(a)) => {
            let mut cfg = resolve(&a.train.common, RunConfig::default())?;
            a.train.apply(&mut cfg);
            set(&mut cfg.conv, a.conv);
            set(&mut cfg.activation, a.activation);
            cmd_train(cfg, Task::Classification)
        }
        Command::Train(TrainCommand::Det(a)) => {
            let defaults = RunConfig {
                train: TrainConfig::detection(),
                ..RunConfig::default()
            };
            let mut cfg = resolve(&a.common, defaults)?;
            a.apply(&mut cfg);
            cmd_train(cfg, Task::Detection)
        }
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Params(a) => cmd_params(a),
    }
}

fn emit(cfg: &RunConfig, mut body: Value) -> Result<()> {
    body["config"] = serde_json::to_value(cfg)?;
    let text = serde_json::to_string_pretty(&body)?;
    if let Some(path) = &cfg.report {
        fs::write(path, &text).map_err(Error::at_path(path))?;
    }
    println!("{text}");
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut cfg = resolve(&a.common, RunConfig::default())?;
    set_path(&mut cfg.dataset, &a.dataset);
    let s = &mut cfg.synth;
    set(&mut s.classes, a.classes);
    set(&mut s.samples_per_class, a.per_class);
    set(&mut s.seed, a.seed);
    set(&mut s.width, a.width);
    set(&mut s.height, a.height);
    set(&mut s.object_scale, a.object_scale);
    set(&mut s.duration_us, a.duration_us);
    let out = cfg
        .dataset
        .clone()
        .ok_or_else(|| Error::config("synth needs --dataset (output directory)"))?;
    let manifest = synth_dataset(&cfg.synth, &out)?;
    emit(
        &cfg,
        json!({ "command": "synth", "samples": manifest.len(), "manifest": out.join(crate::events::MANIFEST_FILE) }),
    )
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let mut cfg = resolve(&a.common, RunConfig::default())?;
    set_path(&mut cfg.dataset, &a.dataset);
    set(&mut cfg.width, a.width);
    set(&mut cfg.height, a.height);
    let dir = cfg.require_dataset()?.to_path_buf();
    let samples = ingest_dir(&dir, cfg.width, cfg.height)?;
    if samples.is_empty() {
        return Err(Error::config(format!("no .bin files under {}", dir.display())));
    }
    let entries: Vec<ManifestEntry> = samples.iter().map(|(e, _)| e.clone()).collect();
    write_manifest(&dir, &entries)?;
    let events: usize = samples.iter().map(|(_, s)| s.len()).sum();
    let classes = entries.iter().map(|e| e.class_id).max().map_or(0, |c| c + 1);
    emit(
        &cfg,
        json!({
            "command": "ingest",
            "samples": samples.len(),
            "classes": classes,
            "mean_events": events as f64 / samples.len() as f64,
        }),
    )
}

fn dataset_root(dir: &Path) -> PathBuf {
    if dir.is_dir() {
        dir.to_path_buf()
    } else {
        dir.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

/// Loads or builds the graph of every manifest entry, in manifest order.
/// With a cache configured, graphs are read from it when present and
/// written to it otherwise. Returns the graphs and how many were reused.
fn graphs_for(cfg: &RunConfig, root: &Path, entries: &[ManifestEntry]) -> Result<(Vec<EventGraph>, Vec<String>, usize)> {
    cfg.graph.validate()?;
    if let Some(cache) = &cfg.cache {
        fs::create_dir_all(cache).map_err(Error::at_path(cache))?;
    }
    let built: Vec<(EventGraph, String, bool)> = entries
        .par_iter()
        .map(|e| {
            let sample_path = root.join(&e.path);
            let key = cache_key(&cfg.graph, &fs::canonicalize(&sample_path).unwrap_or(sample_path.clone()))?;
            let file = cfg.cache.as_ref().map(|c| c.join(format!("{key}.evg")));
            if let Some(f) = file.as_ref().filter(|f| f.is_file()) {
                return Ok((load_graph(f)?, key, true));
            }
            let g = build_graph(&load_sample(root, e)?, &cfg.graph)?;
            if let Some(f) = &file {
                save_graph(&g, f)?;
            }
            Ok((g, key, false))
        })
        .collect::<Result<_>>()?;
    let reused = built.iter().filter(|b| b.2).count();
    let (graphs, keys) = built.into_iter().map(|(g, k, _)| (g, k)).unzip();
    Ok((graphs, keys, reused))
}

fn load_dataset(cfg: &RunConfig) -> Result<(PathBuf, Vec<ManifestEntry>)> {
    let dir = cfg.require_dataset()?;
    let entries = load_manifest(dir)?;
    if entries.is_empty() {
        return Err(Error::config(format!("dataset {} has no samples", dir.display())));
    }
    Ok((dataset_root(dir), entries))
}

fn samples_for(cfg: &RunConfig) -> Result<(Vec<ManifestEntry>, Vec<Sample>)> {
    let (root, entries) = load_dataset(cfg)?;
    let (graphs, _, _) = graphs_for(cfg, &root, &entries)?;
    let samples = entries
        .iter()
        .zip(graphs)
        .map(|(e, graph)| Sample {
            bbox: e.bbox.map(|b| b.to_fractions(e.width, e.height)),
            label: e.class_id as usize,
            graph,
        })
        .collect();
    Ok((entries, samples))
}

#[derive(Serialize, Deserialize)]
struct CacheIndex {
    graph: GraphParams,
    entries: Vec<CacheEntry>,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    sample: String,
    class_id: u32,
    file: String,
    n_vertices: usize,
    n_edges: usize,
}

fn cmd_graph_build(a: GraphBuildArgs) -> Result<()> {
    let mut cfg = resolve(&a.common, RunConfig::default())?;
    set_path(&mut cfg.dataset, &a.dataset);
    set_path(&mut cfg.cache, &a.cache);
    a.graph.apply(&mut cfg);
    let cache = cfg.require_cache()?.to_path_buf();
    let (root, entries) = load_dataset(&cfg)?;
    let (graphs, keys, reused) = graphs_for(&cfg, &root, &entries)?;
    let index = CacheIndex {
        graph: cfg.graph.clone(),
        entries: entries
            .iter()
            .zip(&graphs)
            .zip(&keys)
            .map(|((e, g), k)| CacheEntry {
                sample: e.path.clone(),
                class_id: e.class_id,
                file: format!("{k}.evg"),
                n_vertices: g.n_vertices(),
                n_edges: g.n_edges(),
            })
            .collect(),
    };
    let index_path = cache.join(CACHE_INDEX);
    fs::write(&index_path, serde_json::to_vec_pretty(&index)?).map_err(Error::at_path(&index_path))?;
    let n = graphs.len() as f64;
    emit(
        &cfg,
        json!({
            "command": "graph build",
            "graphs": graphs.len(),
            "reused": reused,
            "mean_vertices": graphs.iter().map(|g| g.n_vertices()).sum::<usize>() as f64 / n,
            "mean_edges": graphs.iter().map(|g| g.n_edges()).sum::<usize>() as f64 / n,
        }),
    )
}

fn cmd_graph_profile(a: ProfileArgs) -> Result<()> {
    let mut cfg = resolve(&a.common, RunConfig::default())?;
    set_path(&mut cfg.cache, &a.cache);
    let profiles = if a.profiles.is_empty() {
        vec![MemoryProfile::attr64(), MemoryProfile::lean32()]
    } else {
        a.profiles.clone()
    };
    let sizes: Vec<(u64, u64)> = match (a.vertices, a.edges) {
        (Some(v), Some(e)) => vec![(v, e)],
        _ => {
            let cache = cfg.require_cache()?;
            let index_path = cache.join(CACHE_INDEX);
            if !index_path.is_file() {
                return Err(Error::config(format!(
                    "{} has no {CACHE_INDEX}; run `evgraph graph build` first",
                    cache.display()
                )));
            }
            let index: CacheIndex = serde_json::from_slice(&fs::read(&index_path).map_err(Error::at_path(&index_path))?)?;
            index
                .entries
                .par_iter()
                .map(|e| load_graph(&cache.join(&e.file)).map(|g| (g.n_vertices() as u64, g.n_edges() as u64)))
                .collect::<Result<_>>()?
        }
    };
    if sizes.is_empty() {
        return Err(Error::config("no graphs to profile"));
    }
    let n = sizes.len() as f64;
    let mut rows = Vec::new();
    let mut totals = Vec::new();
    for p in &profiles {
        let mut bytes = 0u64;
        for &(v, e) in &sizes {
            bytes += account_memory(v, e, p)?.total_bytes;
        }
        let mean_bytes = bytes as f64 / n;
        totals.push(mean_bytes);
        rows.push(json!({
            "profile": p.to_string(),
            "vertex_stride": p.vertex_stride(),
            "edge_stride": p.edge_stride(),
            "mean_total_bytes": mean_bytes,
            "mean_mb": mean_bytes / 1e6,
        }));
    }
    let ratio = (totals.len() >= 2).then(|| totals[0] / totals[1]);
    emit(
        &cfg,
        json!({
            "command": "graph profile",
            "graphs": sizes.len(),
            "mean_vertices": sizes.iter().map(|s| s.0).sum::<u64>() as f64 / n,
            "mean_edges": sizes.iter().map(|s| s.1).sum::<u64>() as f64 / n,
            "profiles": rows,
            "ratio": ratio,
        }),
    )
}

fn class_count(cfg: &RunConfig, entries: &[ManifestEntry]) -> usize {
    cfg.classes
        .unwrap_or_else(|| entries.iter().map(|e| e.class_id as usize).max().map_or(1, |c| c + 1))
}

fn split(cfg: &RunConfig, entries: &[ManifestEntry]) -> Result<(Vec<usize>, Vec<usize>)> {
    let labels: Vec<u32> = entries.iter().map(|e| e.class_id).collect();
    stratified_split(&labels, cfg.train_fraction, cfg.split_seed)
}

fn pick(samples: &[Sample], idx: &[usize]) -> Vec<Sample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

fn model_spec(cfg: &RunConfig, task: Task, n_classes: usize) -> ModelSpec {
    match task {
        Task::Classification => ModelSpec {
            activation: cfg.activation,
            ..ModelSpec::classifier(cfg.conv, n_classes, 1)
        },
        Task::Detection => ModelSpec::detector(n_classes),
    }
}

fn cmd_train(mut cfg: RunConfig, task: Task) -> Result<()> {
    cfg.train.task = task;
    if task == Task::Classification && cfg.conv == ConvKind::Spline {
        cfg.graph.with_edge_attrs = true;
    }
    cfg.train.checkpoint.clone_from(&cfg.checkpoint);
    if cfg.history.is_none() {
        cfg.history = cfg.report.as_ref().map(|r| r.with_extension("csv"));
    }
    cfg.train.validate()?;
    let (entries, samples) = samples_for(&cfg)?;
    let (train_idx, test_idx) = split(&cfg, &entries)?;
    let n_classes = class_count(&cfg, &entries);
    let mut model = Model::build(&model_spec(&cfg, task, n_classes), cfg.train.seed)?;
    let outcome = train(&mut model, &pick(&samples, &train_idx), &pick(&samples, &test_idx), &cfg.train)?;
    if let Some(path) = &cfg.history {
        outcome.history.write_csv(path)?;
    }
    let metric = match task {
        Task::Classification => "accuracy",
        Task::Detection => "map50",
    };
    emit(
        &cfg,
        json!({
            "command": if task == Task::Classification { "train cls" } else { "train det" },
            "train_samples": train_idx.len(),
            "test_samples": test_idx.len(),
            "parameters": model.parameter_count(),
            "metric": metric,
            "best_epoch": outcome.best_epoch,
            "best_metric": outcome.best_metric,
            "epochs_run": outcome.history.records.len(),
            "history": outcome.history.records,
        }),
    )
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let mut cfg = resolve(&a.common, RunConfig::default())?;
    set_path(&mut cfg.dataset, &a.dataset);
    set_path(&mut cfg.cache, &a.cache);
    set_path(&mut cfg.checkpoint, &a.checkpoint);
    set(&mut cfg.train_fraction, a.train_fraction);
    set(&mut cfg.split_seed, a.split_seed);
    a.graph.apply(&mut cfg);
    let (model, header) = Model::load(cfg.require_checkpoint()?)?;
    if model.spec.conv == ConvKind::Spline {
        cfg.graph.with_edge_attrs = true;
    }
    let (entries, samples) = samples_for(&cfg)?;
    let set = if a.all { samples } else { pick(&samples, &split(&cfg, &entries)?.1) };
    let metric = evaluate(&model, &set)?;
    let name = match model.spec.task {
        Task::Classification => "accuracy",
        Task::Detection => "map50",
    };
    emit(
        &cfg,
        json!({
            "command": "eval",
            "task": model.spec.task,
            "conv": model.spec.conv,
            "samples": set.len(),
            "metric": name,
            "value": metric,
            "checkpoint": header.metadata["extra"],
        }),
    )
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let mut cfg = resolve(&a.common, RunConfig::default())?;
    set_path(&mut cfg.dataset, &a.dataset);
    set_path(&mut cfg.cache, &a.cache);
    set_path(&mut cfg.checkpoint, &a.checkpoint);
    set(&mut cfg.conv, a.conv);
    if a.classes.is_some() {
        cfg.classes = a.classes;
    }
    a.graph.apply(&mut cfg);
    let (root, entries) = load_dataset(&cfg)?;
    let model = match &cfg.checkpoint {
        Some(_) => Model::load(cfg.require_checkpoint()?)?.0,
        None => {
            let task = match a.model {
                ModelChoice::Cls => Task::Classification,
                ModelChoice::Det => Task::Detection,
            };
            Model::build(&model_spec(&cfg, task, class_count(&cfg, &entries)), cfg.train.seed)?
        }
    };
    if model.spec.conv == ConvKind::Spline {
        cfg.graph.with_edge_attrs = true;
    }
    let entries = &entries[..a.limit.unwrap_or(entries.len()).min(entries.len())];
    let (graphs, _, _) = graphs_for(&cfg, &root, entries)?;
    let report: BenchReport = bench_throughput(&model, &graphs, a.warmup, a.reps, &mut SystemClock::default())?;
    let mut body = serde_json::to_value(&report)?;
    body["command"] = json!("bench");
    body["task"] = serde_json::to_value(model.spec.task)?;
    body["conv"] = serde_json::to_value(model.spec.conv)?;
    body["mean_vertices"] = json!(graphs.iter().map(|g| g.n_vertices()).sum::<usize>() as f64 / graphs.len() as f64);
    emit(&cfg, body)
}

fn cmd_params(a: ParamsArgs) -> Result<()> {
    let mut cfg = resolve(&a.common, RunConfig::default())?;
    set(&mut cfg.conv, a.conv);
    if a.classes.is_some() {
        cfg.classes = a.classes;
    }
    let n_classes = cfg.classes.unwrap_or(100);
    let task = match a.model {
        ModelChoice::Cls => Task::Classification,
        ModelChoice::Det => Task::Detection,
    };
    let table = Model::build(&model_spec(&cfg, task, n_classes), 0)?.count_parameters();
    let csv = table.to_csv();
    if let Some(path) = &cfg.report {
        let body = json!({
            "command": "params",
            "rows": table.rows,
            "feature_extraction": table.feature_extraction,
            "fully_connected": table.fully_connected,
            "total": table.total,
            "config": cfg,
        });
        fs::write(path, serde_json::to_string_pretty(&body)?).map_err(Error::at_path(path))?;
    }
    print!("{csv}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_defaults_and_rejects_unknown_keys() {
        let base = RunConfig::default();
        let cfg = base
            .merge_json(&json!({"graph": {"radius": 3.0}, "train": {"epochs": 7}, "conv": "gcn"}))
            .unwrap();
        assert_eq!(cfg.graph.radius, 3.0);
        assert_eq!(cfg.graph.max_neighbors, 32);
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.batch_size, 8);
        assert_eq!(cfg.conv, ConvKind::Gcn);
        let err = base.merge_json(&json!({"graph": {"raduis": 3.0}})).unwrap_err();
        assert!(err.is_config() && err.to_string().contains("graph.raduis"), "{err}");
        assert!(base.merge_json(&json!({"conv": "lstm"})).unwrap_err().is_config());
        let cfg = base.merge_json(&json!({"train": {"target_metric": 0.9}})).unwrap();
        assert_eq!(cfg.train.target_metric, Some(0.9));
    }

    #[test]
    fn flags_override_file() {
        let mut cfg = RunConfig::default().merge_json(&json!({"train": {"epochs": 7, "seed": 3}})).unwrap();
        let args = TrainArgs {
            common: CommonArgs::default(),
            dataset: None,
            cache: None,
            checkpoint: None,
            history: None,
            epochs: Some(2),
            batch_size: None,
            lr: None,
            weight_decay: None,
            seed: None,
            target_metric: None,
            parallel_batches: false,
            train_fraction: None,
            split_seed: None,
            classes: None,
            graph: GraphArgs {
                radius: Some(2.5),
                ..Default::default()
            },
        };
        args.apply(&mut cfg);
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.train.seed, 3);
        assert_eq!(cfg.graph.radius, 2.5);
    }

    #[test]
    fn cache_key_depends_on_params_and_path() {
        let p = GraphParams::default();
        let a = cache_key(&p, Path::new("a.bin")).unwrap();
        assert_eq!(a.len(), 64);
        assert_eq!(a, cache_key(&p, Path::new("a.bin")).unwrap());
        assert_ne!(a, cache_key(&p, Path::new("b.bin")).unwrap());
        let q = GraphParams { radius: 4.0, ..p };
        assert_ne!(a, cache_key(&q, Path::new("a.bin")).unwrap());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["evgraph", "frobnicate"]), 2);
        assert_eq!(run(["evgraph", "params", "--bogus"]), 2);
        assert_eq!(run(["evgraph", "train", "cls", "--conv", "lstm"]), 2);
        assert_eq!(run(["evgraph", "graph", "profile"]), 2);
    }
}
