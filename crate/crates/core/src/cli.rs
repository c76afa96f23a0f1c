//! Command-line front end. Every command writes a run manifest next to its
//! output describing inputs, configuration, seeds and timings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convnet::checkpoint::{load_checkpoint, save_checkpoint};
use crate::convnet::optim::{Adam, BASE_LR};
use crate::convnet::{Network, NetworkConfig, SingleBranch};
use crate::error::{Error, Result};
use crate::hierarchy::{
    build_hierarchy, deserialize_hierarchy, serialize_hierarchy, Hierarchy, HierarchyConfig, DEFAULT_QEM_RATIO,
};
use crate::mesh::{
    interpolate_from_point_cloud, load_mesh, midpoint_subdivide, save_mesh, Label, LabeledPointCloud, Mesh, MeshFormat,
};
use crate::neighborhoods::{res_sample, NeighborhoodKind, RES_TEST_THRESHOLD, RES_TRAIN_THRESHOLD};
use crate::pipeline::io::{format_labels, format_logits, parse_labels, parse_logits};
use crate::pipeline::{
    evaluate, load_dataset, majority_vote, reject_crop, train_epoch, Affine, AffineRanges, CropConfig, Sample, Split,
    TrainConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "dualmesh",
    version,
    about = "Mesh hierarchies and dual edge-convolution segmentation"
)]
pub struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Worker threads. Computation is currently sequential; the value is
    /// validated and recorded in the run manifest.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Midpoint-subdivide a mesh, optionally transferring colors and labels
    /// from an annotated point cloud.
    Subdivide(SubdivideArgs),
    /// Build a multi-level mesh hierarchy with trace maps and neighborhoods.
    BuildHierarchy(BuildArgs),
    /// Print per-level vertex and neighborhood statistics of a hierarchy.
    GraphStats(StatsArgs),
    /// Train a network on a dataset manifest.
    Train(TrainArgs),
    /// Run a trained network on a full scene hierarchy.
    Infer(InferArgs),
    /// Majority vote over several logits files.
    Vote(VoteArgs),
    /// Compare predictions with ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SubdivideArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Edges at least this long (meters) are split.
    #[arg(long, default_value_t = 0.02)]
    pub min_edge: f64,
    #[arg(long, default_value_t = 1)]
    pub passes: usize,
    /// Point cloud (PLY or OFF vertices with colors and labels) whose nearest
    /// points give every output vertex its color and label.
    #[arg(long)]
    pub cloud: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Strategy {
    #[value(name = "vc")]
    Vc,
    #[value(name = "vc+qem")]
    VcQem,
    #[value(name = "fps")]
    Fps,
}

/// Euclidean neighborhood flags shared by several commands.
#[derive(Debug, Clone, Args)]
pub struct NeighborhoodArgs {
    /// Radius per level in meters, comma separated; one value applies to
    /// every level.
    #[arg(long, value_delimiter = ',', conflicts_with = "knn")]
    pub radius: Option<Vec<f64>>,
    /// k nearest neighbors on every level.
    #[arg(long)]
    pub knn: Option<usize>,
}

impl NeighborhoodArgs {
    fn kinds(&self, depth: usize) -> Result<Option<Vec<NeighborhoodKind>>> {
        if let Some(k) = self.knn {
            return Ok(Some(vec![NeighborhoodKind::Knn { k }; depth]));
        }
        let Some(r) = &self.radius else {
            return Ok(None);
        };
        let radii = match r.len() {
            1 => vec![r[0]; depth],
            n if n == depth => r.clone(),
            n => return Err(Error::Config(format!("{n} radii given for {depth} levels"))),
        };
        Ok(Some(
            radii.into_iter().map(|r| NeighborhoodKind::Radius { r }).collect(),
        ))
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = Strategy::VcQem)]
    pub strategy: Strategy,
    /// Cell sizes in meters. For `vc` one per level; for the other
    /// strategies only the first (the clustering pre-pass) is used.
    #[arg(long, value_delimiter = ',', default_value = "0.04,0.08,0.16,0.32")]
    pub cells: Vec<f64>,
    /// Fraction of vertices kept by each QEM or FPS step.
    #[arg(long, default_value_t = DEFAULT_QEM_RATIO)]
    pub qem_ratio: f64,
    /// Number of levels for `vc+qem` and `fps`.
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    #[command(flatten)]
    pub neighborhoods: NeighborhoodArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fail instead of creating a missing output directory.
    #[arg(long)]
    pub no_create: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub hierarchy: PathBuf,
    #[command(flatten)]
    pub neighborhoods: NeighborhoodArgs,
    /// Also report Euclidean degrees after edge sampling with this threshold.
    #[arg(long)]
    pub res_test: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Preset {
    Dcm,
    ScmGeodesic,
    ScmEuclidean,
    Scannet,
    Matterport,
    S3dis,
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    #[arg(long, value_enum, default_value_t = Preset::Scannet)]
    pub network: Preset,
    /// Class count for the `dcm` and `scm-*` presets.
    #[arg(long, default_value_t = 21)]
    pub classes: usize,
    /// Network configuration JSON; overrides `--network`.
    #[arg(long)]
    pub network_config: Option<PathBuf>,
    #[command(flatten)]
    pub neighborhoods: NeighborhoodArgs,
}

impl NetworkArgs {
    fn config(&self) -> Result<NetworkConfig> {
        let mut cfg = match &self.network_config {
            Some(p) => serde_json::from_str(&read_text(p)?)?,
            None => match self.network {
                Preset::Dcm => NetworkConfig::dcm(self.classes),
                Preset::ScmGeodesic => NetworkConfig::scm(self.classes, SingleBranch::Geodesic),
                Preset::ScmEuclidean => NetworkConfig::scm(self.classes, SingleBranch::Euclidean),
                Preset::Scannet => NetworkConfig::scannet(),
                Preset::Matterport => NetworkConfig::matterport(),
                Preset::S3dis => NetworkConfig::s3dis(),
            },
        };
        if let Some(kinds) = self.neighborhoods.kinds(cfg.depth())? {
            for (lv, k) in cfg.levels.iter_mut().zip(kinds) {
                if lv.euclidean.enabled() {
                    lv.neighborhood = Some(k);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest JSON; scenes with split `train` are used.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub net: NetworkArgs,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    /// Base learning rate, halved every 40 epochs.
    #[arg(long, default_value_t = BASE_LR)]
    pub lr: f64,
    /// Edge sampling threshold during training.
    #[arg(long, default_value_t = RES_TRAIN_THRESHOLD)]
    pub res_train: usize,
    /// Samples with a larger unlabeled fraction are skipped.
    #[arg(long, default_value_t = 0.8)]
    pub reject_threshold: f64,
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub hierarchy: PathBuf,
    /// Output directory for `logits_<run>.txt` and `predictions.txt`.
    #[arg(long)]
    pub output: PathBuf,
    /// Edge sampling threshold at inference; 0 keeps every edge.
    #[arg(long, default_value_t = RES_TEST_THRESHOLD)]
    pub res_test: usize,
    /// Independent runs; predictions are their majority vote.
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Apply a random affine map to every run.
    #[arg(long)]
    pub augment: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct VoteArgs {
    /// Logits files, one per run.
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Predictions file, one class per line.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    /// Ground truth: a hierarchy directory (level-0 labels), a labeled mesh,
    /// or a label file.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub classes: usize,
    /// Comma-separated class names for the CSV.
    #[arg(long, value_delimiter = ',')]
    pub class_names: Vec<String>,
    /// Output prefix; writes `<prefix>.json` and `<prefix>.csv`.
    #[arg(long)]
    pub output: PathBuf,
}

/// Record of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub timings: BTreeMap<String, f64>,
    pub threads: Option<usize>,
    pub started_unix: u64,
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value, threads: Option<usize>) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            threads,
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    /// Writes `run.json` inside a directory output, or `<file>.run.json`
    /// next to a file output.
    fn write(&self, output: &Path) -> Result<PathBuf> {
        let path = if output.is_dir() {
            output.join("run.json")
        } else {
            let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
            name.push(".run.json");
            output.with_file_name(name)
        };
        write_file(&path, serde_json::to_string_pretty(self)?.as_bytes())?;
        Ok(path)
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io_path(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io_path(path, e))
}

fn read_mesh(path: &Path) -> Result<Mesh> {
    load_mesh(path, MeshFormat::from_path(path)?)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.threads == Some(0) {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    let t = cli.threads;
    match cli.command {
        Command::Subdivide(a) => subdivide(a, t),
        Command::BuildHierarchy(a) => build(a, t),
        Command::GraphStats(a) => graph_stats(a),
        Command::Train(a) => train(a, t),
        Command::Infer(a) => infer(a, t),
        Command::Vote(a) => vote(a, t),
        Command::Eval(a) => eval(a, t),
    }
}

fn subdivide(a: SubdivideArgs, threads: Option<usize>) -> Result<()> {
    if !(a.min_edge > 0.0 && a.min_edge.is_finite()) {
        return Err(Error::Config("--min-edge must be positive".into()));
    }
    let start = Instant::now();
    let mut mesh = read_mesh(&a.input)?;
    mesh.ensure_valid()?;
    for _ in 0..a.passes {
        mesh = midpoint_subdivide(&mesh, a.min_edge);
    }
    let mut inputs = vec![a.input.clone()];
    if let Some(c) = &a.cloud {
        let cloud_mesh = read_mesh(c)?;
        let colors = cloud_mesh
            .colors
            .ok_or_else(|| Error::Invalid(format!("{} has no vertex colors", c.display())))?;
        let labels = cloud_mesh
            .labels
            .ok_or_else(|| Error::Invalid(format!("{} has no vertex labels", c.display())))?;
        let cloud = LabeledPointCloud::new(cloud_mesh.positions, colors, labels)?;
        mesh = interpolate_from_point_cloud(&mesh, &cloud)?;
        inputs.push(c.clone());
    }
    save_mesh(&mesh, &a.output, MeshFormat::from_path(&a.output)?)?;
    let mut m = RunManifest::new(
        "subdivide",
        serde_json::json!({"min_edge": a.min_edge, "passes": a.passes}),
        threads,
    );
    m.inputs = inputs;
    m.outputs = vec![a.output.clone()];
    m.timings.insert("total".into(), start.elapsed().as_secs_f64());
    m.write(&a.output)?;
    Ok(())
}

fn hierarchy_config(a: &BuildArgs) -> Result<HierarchyConfig> {
    let steps = a
        .levels
        .checked_sub(1)
        .filter(|&s| s > 0)
        .ok_or_else(|| Error::Config("--levels must be at least 2".into()))?;
    let prepass = *a
        .cells
        .first()
        .ok_or_else(|| Error::Config("--cells needs a value".into()))?;
    let cfg = match a.strategy {
        Strategy::Vc => HierarchyConfig::vc_cells(&a.cells),
        Strategy::VcQem => HierarchyConfig::vc_qem_with(prepass, a.qem_ratio, steps),
        Strategy::Fps => HierarchyConfig {
            prepass_cell: Some(prepass),
            ..HierarchyConfig::fps(a.qem_ratio, steps, a.seed)
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn build(a: BuildArgs, threads: Option<usize>) -> Result<()> {
    let start = Instant::now();
    let cfg = hierarchy_config(&a)?;
    let mesh = read_mesh(&a.input)?;
    mesh.ensure_valid()?;
    let mut h = build_hierarchy(&mesh, &cfg)?;
    let built = start.elapsed().as_secs_f64();
    if let Some(kinds) = a.neighborhoods.kinds(h.depth())? {
        h.build_euclidean(&kinds)?;
    }
    for w in &h.warnings {
        log::warn!("{w}");
    }
    serialize_hierarchy(&h, &a.output, !a.no_create)?;
    let mut m = RunManifest::new("build-hierarchy", serde_json::to_value(&cfg)?, threads);
    m.config["neighborhoods"] = serde_json::to_value(a.neighborhoods.kinds(h.depth())?)?;
    m.seeds = vec![a.seed];
    m.inputs = vec![a.input.clone()];
    m.outputs = vec![a.output.clone()];
    m.timings.insert("hierarchy".into(), built);
    m.timings.insert("total".into(), start.elapsed().as_secs_f64());
    m.write(&a.output)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct LevelStats {
    level: usize,
    vertices: usize,
    faces: usize,
    geodesic_edges: usize,
    geodesic_max_degree: usize,
    euclidean_edges: Option<usize>,
    euclidean_max_degree: Option<usize>,
    sampled_edges: Option<usize>,
}

fn graph_stats(a: StatsArgs) -> Result<()> {
    let mut h = deserialize_hierarchy(&a.hierarchy)?;
    if let Some(kinds) = a.neighborhoods.kinds(h.depth())? {
        h.build_euclidean(&kinds)?;
    }
    if a.res_test == Some(0) {
        return Err(Error::Config("--res-test must be at least 1".into()));
    }
    let stats: Vec<LevelStats> = (0..h.depth())
        .map(|l| {
            let e = h.euclidean_edges[l].as_ref().map(|e| &e.edges);
            LevelStats {
                level: l,
                vertices: h.levels[l].vertex_count(),
                faces: h.levels[l].face_count(),
                geodesic_edges: h.geodesic_edges[l].num_edges(),
                geodesic_max_degree: h.geodesic_edges[l].max_degree(),
                euclidean_edges: e.map(|e| e.num_edges()),
                euclidean_max_degree: e.map(|e| e.max_degree()),
                sampled_edges: e
                    .zip(a.res_test)
                    .map(|(e, t)| res_sample(e, t, a.seed ^ l as u64).num_edges()),
            }
        })
        .collect();
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}

/// Loads a hierarchy and makes sure it carries the network's Euclidean edges.
fn prepare(mut h: Hierarchy, cfg: &NetworkConfig) -> Result<Hierarchy> {
    if h.depth() != cfg.depth() {
        return Err(Error::Config(format!(
            "network has {} levels, hierarchy has {}",
            cfg.depth(),
            h.depth()
        )));
    }
    let kinds: Vec<_> = cfg.levels.iter().map(|l| l.neighborhood).collect();
    h.build_euclidean_where(&kinds)?;
    for (l, lv) in cfg.levels.iter().enumerate() {
        if lv.euclidean.enabled() && h.euclidean_edges[l].is_none() {
            return Err(Error::Config(format!(
                "level {l} has a Euclidean branch but no neighborhood in the network or the hierarchy"
            )));
        }
    }
    Ok(h)
}

fn train(a: TrainArgs, threads: Option<usize>) -> Result<()> {
    let start = Instant::now();
    let cfg = a.net.config()?;
    CropConfig {
        reject_threshold: a.reject_threshold,
        ..Default::default()
    }
    .validate()?;
    if a.res_train == 0 {
        return Err(Error::Config("--res-train must be at least 1".into()));
    }
    let (manifest, loaded) = load_dataset(&a.dataset, Split::Train)?;
    if manifest.classes != cfg.classes {
        return Err(Error::Config(format!(
            "dataset has {} classes, network predicts {}",
            manifest.classes, cfg.classes
        )));
    }
    let mut samples = Vec::new();
    for s in loaded {
        if reject_crop(s.level0(), a.reject_threshold) {
            log::info!("skipping {}: too few labeled vertices", s.name);
            continue;
        }
        let h = prepare(s.hierarchy, &cfg)?;
        samples.push(Sample::new(s.name, h));
    }
    if samples.is_empty() {
        return Err(Error::Invalid("no training sample left after rejection".into()));
    }
    let loaded_at = start.elapsed().as_secs_f64();
    let tc = TrainConfig {
        batch_size: a.batch_size,
        res_threshold: Some(a.res_train),
        base_lr: a.lr,
        augment: (!a.no_augment).then(AffineRanges::default),
        seed: a.seed,
    };
    let mut net = Network::new(cfg.clone(), a.seed)?;
    let mut opt = Adam::new(net.params());
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut losses = Vec::with_capacity(a.epochs);
    for epoch in 0..a.epochs {
        let loss = train_epoch(&mut net, &mut opt, &samples, &tc, epoch, &mut rng)?;
        log::info!("epoch {epoch}: loss {loss:.5}");
        losses.push(loss);
    }
    save_checkpoint(&net, &a.output)?;
    let mut m = RunManifest::new(
        "train",
        serde_json::json!({"network": cfg, "train": tc, "epochs": a.epochs, "samples": samples.len(), "losses": losses}),
        threads,
    );
    m.seeds = vec![a.seed];
    m.inputs = vec![a.dataset.clone()];
    m.outputs = vec![a.output.clone()];
    m.timings.insert("load".into(), loaded_at);
    m.timings.insert("total".into(), start.elapsed().as_secs_f64());
    m.write(&a.output)?;
    Ok(())
}

fn infer(a: InferArgs, threads: Option<usize>) -> Result<()> {
    let start = Instant::now();
    if a.runs == 0 {
        return Err(Error::Config("--runs must be at least 1".into()));
    }
    let net = load_checkpoint(&a.checkpoint)?;
    let h = prepare(deserialize_hierarchy(&a.hierarchy)?, net.config())?;
    let sample = Sample::new("scene", h);
    std::fs::create_dir_all(&a.output).map_err(|e| Error::io_path(&a.output, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut runs = Vec::with_capacity(a.runs);
    let mut outputs = Vec::new();
    let mut forward = 0.0;
    for r in 0..a.runs {
        let affine = a.augment.then(|| Affine::random(&AffineRanges::default(), &mut rng));
        let res = (a.res_test > 0).then(|| crate::convnet::ResSampling {
            threshold: a.res_test,
            seed: a.seed.wrapping_add(r as u64),
        });
        let t = Instant::now();
        let g = sample.graph(affine.as_ref(), res)?;
        let logits = net.forward(&g, false)?.0;
        forward += t.elapsed().as_secs_f64();
        let path = a.output.join(format!("logits_{r}.txt"));
        write_file(&path, format_logits(&logits).as_bytes())?;
        outputs.push(path);
        runs.push(logits);
    }
    let predictions = majority_vote(&runs)?;
    let path = a.output.join("predictions.txt");
    write_file(&path, format_labels(&predictions).as_bytes())?;
    outputs.push(path);
    if let Some(t) = &sample.hierarchy.input_trace {
        let raw: Vec<Label> = t.assignment().iter().map(|&c| predictions[c]).collect();
        let path = a.output.join("raw_predictions.txt");
        write_file(&path, format_labels(&raw).as_bytes())?;
        outputs.push(path);
    }
    let mut m = RunManifest::new(
        "infer",
        serde_json::json!({"res_test": a.res_test, "runs": a.runs, "augment": a.augment}),
        threads,
    );
    m.seeds = vec![a.seed];
    m.inputs = vec![a.checkpoint.clone(), a.hierarchy.clone()];
    m.outputs = outputs;
    m.timings.insert("forward".into(), forward);
    m.timings.insert("total".into(), start.elapsed().as_secs_f64());
    m.write(&a.output)?;
    Ok(())
}

fn vote(a: VoteArgs, threads: Option<usize>) -> Result<()> {
    let start = Instant::now();
    let runs = a
        .inputs
        .iter()
        .map(|p| parse_logits(&read_text(p)?, &p.display().to_string()))
        .collect::<Result<Vec<_>>>()?;
    let predictions = majority_vote(&runs)?;
    write_file(&a.output, format_labels(&predictions).as_bytes())?;
    let mut m = RunManifest::new("vote", serde_json::json!({"runs": runs.len()}), threads);
    m.inputs = a.inputs.clone();
    m.outputs = vec![a.output.clone()];
    m.timings.insert("total".into(), start.elapsed().as_secs_f64());
    m.write(&a.output)?;
    Ok(())
}

fn ground_truth(path: &Path) -> Result<Vec<Label>> {
    if path.is_dir() {
        let h = deserialize_hierarchy(path)?;
        return h.levels[0]
            .labels
            .clone()
            .ok_or_else(|| Error::Invalid(format!("{} has no level-0 labels", path.display())));
    }
    match MeshFormat::from_path(path) {
        Ok(f) => load_mesh(path, f)?
            .labels
            .ok_or_else(|| Error::Invalid(format!("{} has no vertex labels", path.display()))),
        Err(_) => parse_labels(&read_text(path)?, &path.display().to_string()),
    }
}

fn eval(a: EvalArgs, threads: Option<usize>) -> Result<()> {
    let start = Instant::now();
    if a.classes == 0 {
        return Err(Error::Config("--classes must be positive".into()));
    }
    let pred = parse_labels(&read_text(&a.predictions)?, &a.predictions.display().to_string())?;
    let truth = ground_truth(&a.labels)?;
    let r = evaluate(&pred, &truth, a.classes)?;
    let json = a.output.with_extension("json");
    let csv = a.output.with_extension("csv");
    write_file(&json, r.to_json()?.as_bytes())?;
    write_file(&csv, r.to_csv(&a.class_names).as_bytes())?;
    println!("mIoU {:.4}  mAcc {:.4}  accuracy {:.4}", r.miou, r.macc, r.overall);
    let mut m = RunManifest::new("eval", serde_json::json!({"classes": a.classes}), threads);
    m.inputs = vec![a.predictions.clone(), a.labels.clone()];
    m.outputs = vec![json.clone(), csv];
    m.timings.insert("total".into(), start.elapsed().as_secs_f64());
    m.write(&json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_line_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn radius_lists() {
        let n = NeighborhoodArgs {
            radius: Some(vec![0.1]),
            knn: None,
        };
        assert_eq!(
            n.kinds(2).unwrap().unwrap(),
            vec![NeighborhoodKind::Radius { r: 0.1 }; 2]
        );
        let n = NeighborhoodArgs {
            radius: Some(vec![0.1, 0.2, 0.3]),
            knn: None,
        };
        assert!(matches!(n.kinds(2), Err(Error::Config(_))));
    }

    #[test]
    fn strategy_flags() {
        let cli = Cli::try_parse_from([
            "dualmesh",
            "build-hierarchy",
            "--input",
            "a.ply",
            "--output",
            "out",
            "--strategy",
            "vc+qem",
        ])
        .unwrap();
        let Command::BuildHierarchy(a) = cli.command else {
            panic!()
        };
        let cfg = hierarchy_config(&a).unwrap();
        assert_eq!(cfg.strategy_name(), "vc+qem");
        assert_eq!(cfg.prepass_cell, Some(0.04));
        assert_eq!(cfg.steps.len(), 3);
    }
}
