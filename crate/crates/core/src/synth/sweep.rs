use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eval::{compute_recalls, match_objects, MatchOptions, RecallReport};
use crate::fusion::{FusionConfig, FusionEngine};
use crate::graph::GlobalSsg;
use crate::io::DepthSource;

use super::{generate_scene, render_frames, RenderedStream, SceneSpec, SynthError, SyntheticScene};

/// A scene, its rendered stream, the fused graph and its scores.
#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub scene: SyntheticScene,
    pub graph: GlobalSsg<f64>,
    pub report: RecallReport,
}

fn fuse(stream: &RenderedStream, depths: &dyn DepthSource, cfg: &FusionConfig) -> Result<GlobalSsg<f64>, SynthError> {
    let mut engine = FusionEngine::<f64>::new(FusionConfig { record_eval_points: true, ..cfg.clone() })?;
    for frame in &stream.frames {
        engine.process_frame(frame, depths)?;
    }
    Ok(engine.into_graph())
}

fn score(scene: &SyntheticScene, graph: &GlobalSsg<f64>) -> Result<RecallReport, SynthError> {
    let matching = match_objects(graph, &scene.gt, &MatchOptions::default());
    Ok(compute_recalls(&matching, graph, &scene.gt, &scene.vocab)?)
}

/// Generates, renders, fuses (recording evaluation points) and evaluates one scene.
pub fn run_synthetic(spec: &SceneSpec, cfg: &FusionConfig) -> Result<SyntheticRun, SynthError> {
    let scene = generate_scene(spec)?;
    let stream = render_frames(&scene, spec);
    let graph = fuse(&stream, &stream.depth_source(), cfg)?;
    let report = score(&scene, &graph)?;
    Ok(SyntheticRun { scene, graph, report })
}

/// Recalls at one merge threshold, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub relationship_recall: f64,
    pub object_recall: f64,
    pub predicate_recall: f64,
    pub object_mrecall: f64,
    pub predicate_mrecall: f64,
    pub mean_nodes: f64,
}

/// Runs every threshold on every seed of `base` and averages per threshold.
/// Each seed's stream is rendered once and reused across thresholds.
pub fn sweep(base: &SceneSpec, seeds: &[u64], thresholds: &[f64], cfg: &FusionConfig) -> Result<Vec<SweepRow>, SynthError> {
    let mut rows: Vec<SweepRow> = thresholds
        .iter()
        .map(|&threshold| SweepRow {
            threshold,
            relationship_recall: 0.0,
            object_recall: 0.0,
            predicate_recall: 0.0,
            object_mrecall: 0.0,
            predicate_mrecall: 0.0,
            mean_nodes: 0.0,
        })
        .collect();
    if seeds.is_empty() {
        return Ok(rows);
    }
    let n = seeds.len() as f64;
    for &seed in seeds {
        let spec = SceneSpec { seed, ..base.clone() };
        let scene = generate_scene(&spec)?;
        let stream = render_frames(&scene, &spec);
        let depths = stream.depth_source();
        for row in rows.iter_mut() {
            let graph = fuse(&stream, &depths, &FusionConfig { hellinger_threshold: row.threshold, ..cfg.clone() })?;
            let r = score(&scene, &graph)?;
            row.relationship_recall += r.relationship_recall / n;
            row.object_recall += r.object_recall / n;
            row.predicate_recall += r.predicate_recall / n;
            row.object_mrecall += r.object_mrecall / n;
            row.predicate_mrecall += r.predicate_mrecall / n;
            row.mean_nodes += graph.node_count() as f64 / n;
        }
    }
    Ok(rows)
}

/// One row per threshold: recall (Rel., Obj., Pred.) and mRecall (Obj., Pred.), in percent.
pub fn format_sweep_table(rows: &[SweepRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "| {:>6} | {:^26} | {:^17} | {:>7} |", "", "Recall", "mRecall", "");
    let _ = writeln!(
        s,
        "| {:>6} | {:>8} {:>8} {:>8} | {:>8} {:>8} | {:>7} |",
        "δ_d", "Rel.", "Obj.", "Pred.", "Obj.", "Pred.", "nodes"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "| {:>6.2} | {:>8.2} {:>8.2} {:>8.2} | {:>8.2} {:>8.2} | {:>7.1} |",
            r.threshold,
            100.0 * r.relationship_recall,
            100.0 * r.object_recall,
            100.0 * r.predicate_recall,
            100.0 * r.object_mrecall,
            100.0 * r.predicate_mrecall,
            r.mean_nodes
        );
    }
    s
}
