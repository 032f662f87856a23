//! Command-line subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use painpaint_core::camera::warp_forward;
use painpaint_core::consistency::{DEFAULT_ETA, FeatureExtractor, PatchStatsExtractor, ScoredView, score_all};
use painpaint_core::graph::{GeometricMatcher, Matcher, PerspectiveGraph};
use painpaint_core::harness::{MaskPolicy, SceneSpec, generate};
use painpaint_core::inpaint::{Corruption, CorruptingInpainter, CorruptionTargets, Inpainter};
use painpaint_core::metrics::{MetricTable, evaluate_view};
use painpaint_core::pipeline::{Backends, PipelineOutput, RoundReport, RunOptions, build_perspective_graph, run_pipeline};
use painpaint_core::propagation::{ConstantDepth, DepthEstimator};
use painpaint_core::sampler::TrajectoryEntry;
use painpaint_core::scene::ViewBankModel;
use painpaint_core::{Image, ViewId};

use crate::config::{ConfigBuilder, DepthKind, InpainterKind, MatcherKind, RunConfig};
use crate::dataset::{Dataset, fnv1a, save_synthetic, view_name};
use crate::error::{Error, Result};
use crate::formats::{FileMatcher, GraphFile, PrecomputedFeatures, format_jsonl, format_metrics_csv, format_metrics_summary, load_trajectory};
use crate::io;
use crate::service::ServiceInpainter;

pub const CONFIG_FILE: &str = "config.toml";
pub const GRAPH_FILE: &str = "graph.json";
pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const ROUNDS_FILE: &str = "rounds.jsonl";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const VIEWS_DIR: &str = "views";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Parser)]
#[command(name = "painpaint", version, about = "Perspective-aware multi-view inpainting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset with ground truth.
    Generate(GenerateArgs),
    /// Build the perspective graph and cache it in the output directory.
    BuildGraph(ConfigArgs),
    /// Forward-warp one view into another camera.
    Warp(WarpArgs),
    /// Run a single round.
    Propagate(ConfigArgs),
    /// Score candidate inpaintings against an anchor.
    Verify(VerifyArgs),
    /// Run the full loop.
    Run(ConfigArgs),
    /// Compare a run's final views with ground truth.
    Eval(EvalArgs),
    /// Re-run from a previous run's log and check the outputs match.
    Replay(ReplayArgs),
}

/// Configuration layers. Any key can be set with `--set key=value`.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub output: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub iters: Option<String>,
    #[arg(long)]
    pub inpainter: Option<String>,
    #[arg(long)]
    pub anchor: Option<String>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskArg {
    Central,
    Silhouette,
    Multi,
    Removal,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 96)]
    pub width: usize,
    #[arg(long, default_value_t = 72)]
    pub height: usize,
    #[arg(long, default_value_t = 12)]
    pub views: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = MaskArg::Central)]
    pub mask: MaskArg,
}

#[derive(Debug, Clone, Args)]
pub struct WarpArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub from: ViewId,
    #[arg(long)]
    pub to: ViewId,
    /// Output PNG. A validity mask is written next to it as `<stem>_valid.png`.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub anchor_image: PathBuf,
    #[arg(long)]
    pub anchor_depth: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    /// Directory of `NAME.png` candidates, each with a `NAME.pfm` depth map.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Precomputed feature file keyed by file stem.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    pub eta: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Run directory holding `views/`.
    #[arg(long)]
    pub run: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Directory of the run to replay.
    #[arg(long)]
    pub from: PathBuf,
    /// Fresh directory for the replayed outputs.
    #[arg(long)]
    pub output: PathBuf,
}

impl ConfigArgs {
    pub fn resolve(&self, env: impl IntoIterator<Item = (String, String)>) -> Result<RunConfig> {
        let mut b = ConfigBuilder::new();
        if let Some(p) = &self.config {
            b = b.file(p)?;
        }
        b = b.env(env)?;
        let direct = [
            ("dataset", &self.dataset),
            ("output", &self.output),
            ("seed", &self.seed),
            ("iters", &self.iters),
            ("inpainter", &self.inpainter),
            ("anchor", &self.anchor),
        ];
        for (k, v) in direct {
            if let Some(v) = v {
                b = b.set(k, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            b = b.set(k.trim(), v)?;
        }
        b.build()
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let env = || std::env::vars().collect::<Vec<_>>();
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::BuildGraph(a) => cmd_build_graph(&a.resolve(env())?),
        Command::Warp(a) => cmd_warp(&a),
        Command::Propagate(a) => {
            let mut cfg = a.resolve(env())?;
            cfg.iters = 1;
            cmd_run(&cfg, None).map(|_| ())
        }
        Command::Verify(a) => cmd_verify(&a),
        Command::Run(a) => cmd_run(&a.resolve(env())?, None).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a),
        Command::Replay(a) => cmd_replay(&a),
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let mask = match a.mask {
        MaskArg::Central => MaskPolicy::CentralSquare { fraction: 0.375 },
        MaskArg::Silhouette => MaskPolicy::ObjectSilhouette { primitive: 4, dilate: 2 },
        MaskArg::Multi => MaskPolicy::MultiRegion { count: 3, fraction: 0.2 },
        MaskArg::Removal => MaskPolicy::Removal { primitive: 4, dilate: 2 },
    };
    let spec = SceneSpec::orbit_room(a.width, a.height, a.views).with_mask(mask);
    let ds = generate(&spec, a.seed).map_err(|e| Error::Usage(e.to_string()))?;
    save_synthetic(&a.output, &ds)?;
    let spec_json = serde_json::to_string_pretty(&spec).expect("spec serializes") + "\n";
    io::write(&a.output.join("scene.json"), spec_json.as_bytes())?;
    println!("wrote {} views to {}", ds.views.len(), a.output.display());
    Ok(())
}

fn graph_key(cfg: &RunConfig, ds: &Dataset) -> Result<String> {
    let matcher = match cfg.matcher {
        MatcherKind::Geometric => format!("geometric:stride={}", cfg.matcher_stride),
        MatcherKind::File => {
            let p = cfg.matches.as_deref().ok_or_else(|| Error::Usage("matcher 'file' needs 'matches'".into()))?;
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            format!("file:{:016x}", fnv1a(&bytes))
        }
    };
    Ok(format!("{matcher};tau={};data={:016x}", cfg.tau, ds.fingerprint))
}

fn make_matcher(cfg: &RunConfig) -> Result<Box<dyn Matcher>> {
    Ok(match cfg.matcher {
        MatcherKind::Geometric => Box::new(GeometricMatcher { stride: cfg.matcher_stride.max(1), ..GeometricMatcher::default() }),
        MatcherKind::File => {
            let p = cfg.matches.as_deref().ok_or_else(|| Error::Usage("matcher 'file' needs 'matches'".into()))?;
            Box::new(FileMatcher::load(p)?)
        }
    })
}

/// Uses the cached graph in `out` when its key matches, else builds and caches one.
fn load_or_build_graph(cfg: &RunConfig, ds: &Dataset, out: &Path) -> Result<PerspectiveGraph> {
    let key = graph_key(cfg, ds)?;
    let path = out.join(GRAPH_FILE);
    if path.exists()
        && let Ok(g) = GraphFile::load(&path)
            && g.key == key {
                return Ok(g.to_graph());
            }
    let graph = build_perspective_graph(&ds.views, make_matcher(cfg)?.as_ref(), &cfg.pipeline())?;
    GraphFile::from_graph(&graph, key).save(&path)?;
    Ok(graph)
}

fn cmd_build_graph(cfg: &RunConfig) -> Result<()> {
    let ds = Dataset::load(cfg.dataset()?)?;
    let out = cfg.output()?;
    let g = load_or_build_graph(cfg, &ds, out)?;
    println!("graph: {} nodes, {} edges, {} components", g.node_count(), g.edge_count(), g.components().len());
    Ok(())
}

fn cmd_warp(a: &WarpArgs) -> Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    let src = ds.view(a.from)?;
    let dst = ds.view(a.to)?;
    let (image, depth) = match ds.ground_truth.get(&a.from) {
        Some(gt) if gt.depth.is_some() => (&gt.image, gt.depth.as_ref().expect("checked")),
        _ => (&src.image, src.depth.as_ref().ok_or_else(|| Error::Data(format!("view {} has no depth", a.from)))?),
    };
    let w = warp_forward(image, depth, &src.camera, &dst.camera).map_err(|e| Error::Data(e.to_string()))?;
    io::save_image(&a.output, &w.image)?;
    let stem = a.output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "warp".into());
    io::save_mask(&a.output.with_file_name(format!("{stem}_valid.png")), &w.validity)?;
    println!("valid pixels: {:.4}", w.validity.count_ones() as f64 / w.validity.data().len() as f64);
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> Result<()> {
    let anchor = io::load_image(&a.anchor_image)?;
    let anchor_depth = io::load_depth(&a.anchor_depth)?;
    let mask = io::load_mask(&a.mask)?;
    let mut names: Vec<PathBuf> = std::fs::read_dir(&a.candidates)
        .map_err(|e| Error::io(&a.candidates, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Data(format!("{}: no candidate PNGs", a.candidates.display())));
    }
    let stem = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut images = Vec::new();
    let mut depths = Vec::new();
    for p in &names {
        images.push(io::load_image(p)?);
        depths.push(io::load_depth(&p.with_extension("pfm"))?);
    }
    let keys: Vec<String> = names.iter().map(|p| stem(p)).collect();
    let anchor_key = stem(&a.anchor_image);
    let features;
    let patch = PatchStatsExtractor::default();
    let extractor: &dyn FeatureExtractor = match &a.features {
        Some(p) => {
            features = PrecomputedFeatures::load(p)?;
            &features
        }
        None => &patch,
    };
    let cands: Vec<ScoredView<'_>> =
        images.iter().zip(&depths).zip(&keys).map(|((i, d), k)| ScoredView { key: Some(k), image: i, depth: d }).collect();
    let anchor_view = ScoredView { key: Some(&anchor_key), image: &anchor, depth: &anchor_depth };
    let scores = score_all(&cands, anchor_view, &mask, extractor, a.eta).map_err(|e| Error::Data(e.to_string()))?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.s > scores[best].s {
            best = i;
        }
        println!("{}", serde_json::json!({ "candidate": keys[i], "s_rgb": s.s_rgb, "s_depth": s.s_depth, "s": s.s }));
    }
    println!("{}", serde_json::json!({ "selected": keys[best], "index": best, "s": scores[best].s }));
    Ok(())
}

fn inpainter(cfg: &RunConfig, ds: &Dataset) -> Result<Box<dyn Inpainter>> {
    Ok(match cfg.inpainter {
        InpainterKind::Oracle => Box::new(ds.oracle_inpainter()?),
        InpainterKind::Corrupting => Box::new(CorruptingInpainter::new(
            ds.oracle_inpainter()?,
            Corruption { kind: cfg.corruption, magnitude: cfg.corruption_magnitude, targets: CorruptionTargets::AllButOne },
        )),
        InpainterKind::Service => {
            let url = cfg.service_endpoint.clone().ok_or_else(|| Error::Usage("inpainter 'service' needs 'service_endpoint'".into()))?;
            if !(cfg.service_timeout_secs > 0.0 && cfg.service_timeout_secs.is_finite()) {
                return Err(Error::Config("service_timeout_secs must be positive".into()));
            }
            Box::new(ServiceInpainter::new(url, Duration::from_secs_f64(cfg.service_timeout_secs), cfg.service_max_in_flight))
        }
    })
}

fn depth_estimator(cfg: &RunConfig, ds: &Dataset) -> Result<Box<dyn DepthEstimator>> {
    Ok(match cfg.depth {
        DepthKind::GroundTruth => Box::new(ds.depth_oracle()?),
        DepthKind::Constant => {
            if !(cfg.depth_constant > 0.0 && cfg.depth_constant.is_finite()) {
                return Err(Error::Config("depth_constant must be positive".into()));
            }
            Box::new(ConstantDepth(cfg.depth_constant))
        }
    })
}

fn metric_table(ds: &Dataset, images: &BTreeMap<ViewId, Image>) -> Result<Option<MetricTable>> {
    if !ds.has_ground_truth() {
        return Ok(None);
    }
    let rows = ds
        .views
        .iter()
        .map(|v| {
            let img = images.get(&v.id).ok_or_else(|| Error::Data(format!("no output for view {}", v.id)))?;
            evaluate_view(v.id, img, &ds.ground_truth[&v.id].image, &v.mask).map_err(|e| Error::Data(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(MetricTable::from_rows(rows).map_err(|e| Error::Data(e.to_string()))?))
}

fn write_metrics(out: &Path, table: &MetricTable) -> Result<()> {
    io::write(&out.join(METRICS_FILE), format_metrics_csv(table).as_bytes())?;
    io::write(&out.join(SUMMARY_FILE), format_metrics_summary(table).as_bytes())?;
    println!(
        "mean PSNR {} dB, mean SSIM {:.4} over {} views",
        match table.mean_psnr {
            painpaint_core::metrics::Psnr::Perfect => "inf".to_string(),
            painpaint_core::metrics::Psnr::Finite(db) => format!("{db:.2}"),
        },
        table.mean_ssim,
        table.rows.len()
    );
    Ok(())
}

/// Runs the loop and writes every artifact to the configured output directory.
pub fn cmd_run(cfg: &RunConfig, replay: Option<&[TrajectoryEntry]>) -> Result<PipelineOutput> {
    let ds = Dataset::load(cfg.dataset()?)?;
    let out = cfg.output()?.to_path_buf();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    io::write(&out.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;
    if let Some(a) = cfg.anchor {
        ds.view(a)?;
    }
    let graph = load_or_build_graph(cfg, &ds, &out)?;
    let depth = depth_estimator(cfg, &ds)?;
    let inpainter = inpainter(cfg, &ds)?;
    let extractor = PatchStatsExtractor::default();
    let mut scene = ViewBankModel::new();

    let start = Instant::now();
    let clock = move || start.elapsed().as_secs_f64() * 1000.0;
    let mut timings = String::from("round,anchor,wall_ms\n");
    let mut on_round = |r: &RoundReport, _: &TrajectoryEntry| {
        timings.push_str(&format!("{},{},{:.3}\n", r.round, r.anchor, r.wall_ms.unwrap_or(0.0)));
        println!("round {}: anchor {}, {} adjacent, {} retired", r.round, r.anchor, r.adjacent.len(), r.retired.len());
    };
    let options = RunOptions { clock: Some(&clock), replay, on_round: Some(&mut on_round), first_anchor: cfg.anchor };
    let backends = Backends { depth: depth.as_ref(), inpainter: inpainter.as_ref(), extractor: &extractor, scene: &mut scene };
    let output = run_pipeline(&ds.views, graph, &cfg.pipeline(), backends, options)?;

    // Wall time lives only in timings.csv so the other files are reproducible.
    let rounds: Vec<RoundReport> = output.reports.iter().map(|r| RoundReport { wall_ms: None, ..r.clone() }).collect();
    io::write(&out.join(TRAJECTORY_FILE), format_jsonl(&output.trajectory).as_bytes())?;
    io::write(&out.join(ROUNDS_FILE), format_jsonl(&rounds).as_bytes())?;
    io::write(&out.join(TIMINGS_FILE), timings.as_bytes())?;
    for (id, img) in &output.images {
        io::save_image(&out.join(VIEWS_DIR).join(view_name(*id)), img)?;
    }
    println!("{} rounds, {} views inpainted, finished: {:?}", output.reports.len(), output.inpainted.len(), output.done);
    if let Some(table) = metric_table(&ds, &output.images)? {
        write_metrics(&out, &table)?;
    }
    Ok(output)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    if !ds.has_ground_truth() {
        return Err(Error::Usage(format!("{}: evaluation needs ground truth under gt/ for every view", a.dataset.display())));
    }
    let mut images = BTreeMap::new();
    for v in &ds.views {
        let img = io::load_image(&a.run.join(VIEWS_DIR).join(view_name(v.id)))?;
        if img.dims() != v.image.dims() {
            return Err(Error::Data(format!("view {}: output size differs from the dataset", v.id)));
        }
        images.insert(v.id, img);
    }
    let table = metric_table(&ds, &images)?.expect("ground truth checked");
    write_metrics(&a.run, &table)
}

/// Files that must match byte for byte between a run and its replay.
fn deterministic_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = [GRAPH_FILE, TRAJECTORY_FILE, ROUNDS_FILE, METRICS_FILE, SUMMARY_FILE]
        .iter()
        .map(PathBuf::from)
        .filter(|p| dir.join(p).exists())
        .collect();
    let views = dir.join(VIEWS_DIR);
    if views.exists() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(&views)
            .map_err(|e| Error::io(&views, e))?
            .filter_map(|e| e.ok().map(|e| Path::new(VIEWS_DIR).join(e.file_name())))
            .collect();
        v.sort();
        files.extend(v);
    }
    Ok(files)
}

/// Relative paths whose contents differ between `a` and `b`.
pub fn compare_runs(a: &Path, b: &Path) -> Result<Vec<PathBuf>> {
    let mut names = deterministic_files(a)?;
    for n in deterministic_files(b)? {
        if !names.contains(&n) {
            names.push(n);
        }
    }
    Ok(names.into_iter().filter(|n| std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok()).collect())
}

fn cmd_replay(a: &ReplayArgs) -> Result<()> {
    if a.output == a.from {
        return Err(Error::Usage("replay needs a fresh output directory".into()));
    }
    let mut cfg = ConfigBuilder::new().file(&a.from.join(CONFIG_FILE))?.build()?;
    cfg.output = Some(a.output.clone());
    let log = load_trajectory(&a.from.join(TRAJECTORY_FILE))?;
    cmd_run(&cfg, Some(&log))?;
    let diff = compare_runs(&a.from, &a.output)?;
    if !diff.is_empty() {
        let list: Vec<String> = diff.iter().map(|p| p.display().to_string()).collect();
        return Err(Error::Data(format!("replay outputs differ: {}", list.join(", "))));
    }
    println!("replay matches {}", a.from.display());
    Ok(())
}
