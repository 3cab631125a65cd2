use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use scenefuse_core::bench::{BenchRecorder, BenchReport};
use scenefuse_core::eval::{compute_recalls, match_objects, EvalError, MatchOptions, RecallReport};
use scenefuse_core::fusion::FusionConfig;
use scenefuse_core::graph::{read_graph_json, write_dot, write_graph_json, ClassVocabulary};
use scenefuse_core::io::{
    parse_frame_stream, read_ground_truth, read_run_config, write_ground_truth, write_json, DepthDirectory, FrameError,
    FrameRecord, IoError, RunConfig,
};
use scenefuse_core::synth::{format_sweep_table, generate_scene, render_frames, sweep, SceneSpec, SweepRow, SynthError};
use scenefuse_core::{Engine, Graph};

const EXIT_FAILURE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_VOCAB: u8 = 4;
const EXIT_GENERATION: u8 = 5;

/// Incremental 3D semantic scene graphs from per-frame 2D detections.
///
/// Exit codes: 0 success, 1 other failure, 2 unreadable input, 3 configuration
/// error, 4 vocabulary mismatch, 5 scene generation error. Log level is read
/// from SCENEFUSE_LOG (e.g. `SCENEFUSE_LOG=debug`).
#[derive(Parser)]
#[command(name = "scenefuse", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse a frame stream into a scene graph.
    Run(RunArgs),
    /// Score a scene graph against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic scene, its frame stream and ground truth.
    Synth(SynthArgs),
    /// Recall across merge thresholds on synthetic scenes.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Frame stream (JSON Lines). Overrides `input` in the config.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Graph output (JSON). Overrides `output` in the config.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    export_dot: Option<PathBuf>,
    /// Keep back-projected points on each node for evaluation.
    #[arg(long)]
    record_eval_points: bool,
    /// Time each stage and write a latency report.
    #[arg(long)]
    bench: bool,
    /// Where the bench report goes; defaults to `<output>.bench.json`.
    #[arg(long)]
    bench_report: Option<PathBuf>,
    /// Class and predicate names (JSON with `objects` and `predicates`).
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Parse on a separate thread.
    #[arg(long)]
    pipeline: bool,
    /// Directory for `depth_ref` paths; defaults to the input's directory.
    #[arg(long)]
    depth_root: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Association radius in meters.
    #[arg(long, default_value_t = 0.1)]
    radius: f64,
    /// Leave points without a ground-truth neighbour out of the majority test.
    #[arg(long)]
    ignore_unassociated: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Ideal,
    Noisy,
}

#[derive(Args)]
struct SceneArgs {
    /// Scene spec (JSON). Takes precedence over --preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ideal")]
    preset: Preset,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long)]
    out_frames: PathBuf,
    #[arg(long)]
    out_gt: PathBuf,
    /// Also write the vocabulary, for `run --vocab`.
    #[arg(long)]
    out_vocab: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9])]
    thresholds: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2, 3, 4])]
    seeds: Vec<u64>,
    /// Base fusion settings; the threshold is replaced per row.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CmdResult = Result<(), Failure>;

fn fail(code: u8) -> impl FnOnce(anyhow::Error) -> Failure {
    move |error| Failure { code, error }
}

fn with_code<E>(code: u8, context: impl Display) -> impl FnOnce(E) -> Failure
where
    E: std::error::Error + Send + Sync + 'static,
{
    move |e| Failure { code, error: anyhow::Error::new(e).context(context.to_string()) }
}

/// A config that is missing, unreadable or invalid is a config error.
fn config_failure(e: IoError) -> Failure {
    Failure { code: EXIT_CONFIG, error: anyhow::Error::new(e).context("reading configuration") }
}

fn load_vocab(path: &Path) -> Result<ClassVocabulary, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(fail(EXIT_INPUT))?;
    let v: ClassVocabulary =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).map_err(fail(EXIT_CONFIG))?;
    v.validate().map_err(with_code(EXIT_CONFIG, "invalid vocabulary"))?;
    Ok(v)
}

fn load_scene_spec(args: &SceneArgs) -> Result<SceneSpec, Failure> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(fail(EXIT_INPUT))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).map_err(fail(EXIT_CONFIG))?
        }
        None => match args.preset {
            Preset::Ideal => SceneSpec::ideal(0),
            Preset::Noisy => SceneSpec::noisy(0),
        },
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate().map_err(with_code(EXIT_CONFIG, "invalid scene spec"))?;
    Ok(spec)
}

fn synth_failure(e: SynthError) -> Failure {
    let code = match e {
        SynthError::InvalidSpec(_) => EXIT_CONFIG,
        _ => EXIT_GENERATION,
    };
    Failure { code, error: anyhow::Error::new(e) }
}

type Parsed = (Result<FrameRecord, FrameError>, Duration);

/// Frames in file order with their parse time, either read inline or from a
/// reader thread through a bounded channel.
fn frame_source(path: &Path, pipeline: bool, capacity: usize) -> Result<Box<dyn Iterator<Item = Parsed>>, Failure> {
    let mut reader = parse_frame_stream(path).map_err(with_code(EXIT_INPUT, format!("opening {}", path.display())))?;
    let timed = move || {
        let t = Instant::now();
        reader.next().map(|r| (r, t.elapsed()))
    };
    if !pipeline {
        return Ok(Box::new(std::iter::from_fn(timed)));
    }
    let (tx, rx) = mpsc::sync_channel::<Parsed>(capacity);
    let mut next = timed;
    thread::spawn(move || {
        while let Some(item) = next() {
            if tx.send(item).is_err() {
                break;
            }
        }
    });
    Ok(Box::new(rx.into_iter()))
}

#[derive(Serialize)]
struct RunSummary {
    frames: u64,
    skipped_lines: usize,
    rejected_frames: usize,
    accepted_detections: u64,
    nodes: usize,
    edges: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    bench: Option<BenchReport>,
}

fn cmd_run(args: RunArgs) -> CmdResult {
    let mut cfg = match &args.config {
        Some(path) => read_run_config(path).map_err(config_failure)?,
        None => RunConfig::default(),
    };
    cfg.record_eval_points |= args.record_eval_points;
    cfg.bench |= args.bench;
    cfg.pipeline |= args.pipeline;
    let input = args.input.or(cfg.input.clone()).ok_or_else(|| fail(EXIT_INPUT)(anyhow!("no input stream given")))?;
    let output = args.output.or(cfg.output.clone()).ok_or_else(|| fail(EXIT_CONFIG)(anyhow!("no output path given")))?;
    let vocab = match &args.vocab {
        Some(path) => Some(load_vocab(path)?),
        None => cfg.vocab.clone(),
    };
    let depth_root =
        args.depth_root.or(cfg.depth_root.clone()).unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
    let depths = DepthDirectory::new(depth_root);

    let mut engine = Engine::new(cfg.fusion()).map_err(with_code(EXIT_CONFIG, "invalid fusion settings"))?;
    let mut bench = BenchRecorder::new();
    let (mut skipped, mut rejected) = (0, 0);
    let started = Instant::now();
    for (item, parse_time) in frame_source(&input, cfg.pipeline, cfg.channel_capacity)? {
        let frame = match item {
            Ok(f) => f,
            Err(e) if e.is_fatal() => {
                return Err(Failure { code: EXIT_INPUT, error: anyhow::Error::new(e).context(input.display().to_string()) })
            }
            Err(e) => {
                warn!("{}: {e}", input.display());
                skipped += 1;
                continue;
            }
        };
        match engine.process_frame(&frame, &depths) {
            Ok(outcome) => {
                bench.record_parse(parse_time);
                bench.record_frame(outcome.lift, outcome.merge);
            }
            Err(e) => {
                warn!("frame {}: {e}", frame.frame_id);
                rejected += 1;
            }
        }
    }
    let wall = started.elapsed();

    let graph: &Graph = engine.graph();
    let vocab = vocab.unwrap_or_else(|| ClassVocabulary::covering(graph));
    write_graph_json(&output, graph, &vocab).map_err(with_code(EXIT_FAILURE, "writing graph"))?;
    if let Some(dot) = &args.export_dot {
        write_dot(dot, graph, &vocab).map_err(with_code(EXIT_FAILURE, "writing dot export"))?;
    }
    let report = cfg.bench.then(|| bench.finish(wall, graph.node_count(), graph.edge_count()));
    if let Some(r) = &report {
        let path = args.bench_report.unwrap_or_else(|| output.with_extension("bench.json"));
        write_json(&path, r).map_err(with_code(EXIT_FAILURE, "writing bench report"))?;
        println!(
            "parse {:.4} ms  lift {:.4} ms  merge {:.4} ms (mean)  merge p50 {:.4} p99 {:.4}  {:.1} FPS",
            r.parse.mean_ms, r.lift.mean_ms, r.merge.mean_ms, r.merge.p50_ms, r.merge.p99_ms, r.fps
        );
        info!("bench report written to {}", path.display());
    }
    let summary = RunSummary {
        frames: engine.frames_processed(),
        skipped_lines: skipped,
        rejected_frames: rejected,
        accepted_detections: engine.accepted_detections(),
        nodes: graph.node_count(),
        edges: graph.edge_count(),
        bench: report,
    };
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    #[serde(flatten)]
    report: &'a RecallReport,
    matched_nodes: usize,
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let doc = read_graph_json(&args.pred).map_err(with_code(EXIT_INPUT, format!("reading {}", args.pred.display())))?;
    let graph: Graph = doc.to_graph().map_err(with_code(EXIT_INPUT, format!("invalid graph {}", args.pred.display())))?;
    let gt = read_ground_truth(&args.gt).map_err(with_code(EXIT_INPUT, format!("reading {}", args.gt.display())))?;
    // A placeholder vocabulary on the prediction side defers to the ground truth's names.
    let vocab = match &gt.vocab {
        Some(v) if doc.vocab.is_placeholder() => v.clone(),
        _ => doc.vocab.clone(),
    };
    let opts = MatchOptions { radius: args.radius, count_unassociated: !args.ignore_unassociated, ..Default::default() };
    if graph.node_count() > 0 && graph.nodes().all(|n| n.eval_points.is_empty()) {
        warn!("prediction carries no evaluation points; rerun with --record-eval-points");
    }
    let matching = match_objects(&graph, &gt, &opts);
    let report = compute_recalls(&matching, &graph, &gt, &vocab).map_err(|e| match e {
        EvalError::VocabularyMismatch(_) => Failure { code: EXIT_VOCAB, error: anyhow::Error::new(e) },
    })?;
    let out = EvalOutput { report: &report, matched_nodes: matching.assignment.len() };
    write_json(&args.report, &out).map_err(with_code(EXIT_FAILURE, "writing report"))?;
    println!("{}", report.headline());
    if report.centroid_only {
        println!("(evaluation points are single centroids per detection)");
    }
    info!("\n{}", report.class_tables());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> CmdResult {
    let spec = load_scene_spec(&args.scene)?;
    let scene = generate_scene(&spec).map_err(synth_failure)?;
    let stream = render_frames(&scene, &spec);
    let depth_root = args.out_frames.parent().map(Path::to_path_buf).unwrap_or_default();
    stream.write(&args.out_frames, &depth_root).map_err(with_code(EXIT_FAILURE, "writing frames"))?;
    write_ground_truth(&args.out_gt, &scene.gt).map_err(with_code(EXIT_FAILURE, "writing ground truth"))?;
    if let Some(path) = &args.out_vocab {
        write_json(path, &scene.vocab).map_err(with_code(EXIT_FAILURE, "writing vocabulary"))?;
    }
    let detections: usize = stream.frames.iter().map(|f| f.detections.len()).sum();
    println!(
        "{} objects, {} triplets, {} frames, {} detections",
        scene.boxes.len(),
        scene.gt.triplets.len(),
        stream.frames.len(),
        detections
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    spec: &'a SceneSpec,
    seeds: &'a [u64],
    rows: &'a [SweepRow],
}

fn cmd_sweep(args: SweepArgs) -> CmdResult {
    let spec = load_scene_spec(&args.scene)?;
    let base: FusionConfig = match &args.config {
        Some(path) => read_run_config(path).map_err(config_failure)?.fusion(),
        None => FusionConfig::default(),
    };
    for &t in &args.thresholds {
        FusionConfig { hellinger_threshold: t, ..base.clone() }
            .validate()
            .map_err(|e| fail(EXIT_CONFIG)(anyhow!("threshold {t}: {e}")))?;
    }
    let rows = sweep(&spec, &args.seeds, &args.thresholds, &base).map_err(synth_failure)?;
    print!("{}", format_sweep_table(&rows));
    if let Some(path) = &args.report {
        let out = SweepOutput { spec: &spec, seeds: &args.seeds, rows: &rows };
        write_json(path, &out).map_err(with_code(EXIT_FAILURE, "writing sweep report"))?;
    }
    Ok(())
}

/// Joins the error chain, skipping causes already spelled out by the message above them.
fn render_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SCENEFUSE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", render_chain(&f.error));
            ExitCode::from(f.code)
        }
    }
}
