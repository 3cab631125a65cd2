use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::graph::{resolve_predicate, ClassVocabulary, GlobalSsg};
use crate::scalar::Real;

use super::{EvalError, GroundTruthScene, MatchResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecall {
    pub id: usize,
    pub name: String,
    pub total: usize,
    pub hits: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecallCounts {
    pub gt_instances: usize,
    pub matched_instances: usize,
    pub correct_class_instances: usize,
    pub gt_triplets: usize,
    pub triplets_endpoints_matched: usize,
    pub pred_nodes: usize,
    pub pred_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub object_recall: f64,
    pub predicate_recall: f64,
    pub relationship_recall: f64,
    pub object_mrecall: f64,
    pub predicate_mrecall: f64,
    pub per_class_object: Vec<ClassRecall>,
    pub per_class_predicate: Vec<ClassRecall>,
    pub counts: RecallCounts,
    /// Evaluation points were single centroids rather than depth regions.
    pub centroid_only: bool,
}

impl RecallReport {
    /// The headline numbers as a two-level table: recall (Rel., Obj., Pred.) and mRecall (Obj., Pred.).
    pub fn headline(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "| {:^26} | {:^17} |", "Recall", "mRecall");
        let _ = writeln!(s, "| {:>8} {:>8} {:>8} | {:>8} {:>8} |", "Rel.", "Obj.", "Pred.", "Obj.", "Pred.");
        let _ = write!(
            s,
            "| {:>8.2} {:>8.2} {:>8.2} | {:>8.2} {:>8.2} |",
            100.0 * self.relationship_recall,
            100.0 * self.object_recall,
            100.0 * self.predicate_recall,
            100.0 * self.object_mrecall,
            100.0 * self.predicate_mrecall
        );
        s
    }

    /// Per-class tables: object categories then predicates.
    pub fn class_tables(&self) -> String {
        let mut s = String::new();
        for (title, rows) in [("object", &self.per_class_object), ("predicate", &self.per_class_predicate)] {
            let _ = writeln!(s, "{title:<16} {:>6} {:>6} {:>8}", "gt", "hit", "recall");
            for r in rows {
                let _ = writeln!(s, "{:<16} {:>6} {:>6} {:>8.2}", r.name, r.total, r.hits, 100.0 * r.recall);
            }
        }
        s
    }
}

fn ratio(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn class_rows(tally: BTreeMap<usize, (usize, usize)>, name: impl Fn(usize) -> String) -> Vec<ClassRecall> {
    tally
        .into_iter()
        .map(|(id, (total, hits))| ClassRecall { id, name: name(id), total, hits, recall: ratio(hits, total) })
        .collect()
}

fn mean_recall(rows: &[ClassRecall]) -> f64 {
    if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.recall).sum::<f64>() / rows.len() as f64
    }
}

fn check_vocabulary<T: Real>(pred: &GlobalSsg<T>, gt: &GroundTruthScene, vocab: &ClassVocabulary) -> Result<(), EvalError> {
    if let Some(gv) = &gt.vocab {
        if gv != vocab {
            return Err(EvalError::VocabularyMismatch("ground truth and prediction name different categories".into()));
        }
    }
    if !vocab.objects.is_empty() {
        let n = vocab.objects.len();
        if let Some(i) = gt.instances.iter().find(|i| i.class_id >= n) {
            return Err(EvalError::VocabularyMismatch(format!("ground-truth class {} outside vocabulary", i.class_id)));
        }
        if let Some(node) = pred.nodes().find(|node| node.class_id >= n) {
            return Err(EvalError::VocabularyMismatch(format!("predicted class {} outside vocabulary", node.class_id)));
        }
    }
    if !vocab.predicates.is_empty() {
        let n = vocab.predicates.len();
        if let Some(t) = gt.triplets.iter().find(|t| t.2 >= n) {
            return Err(EvalError::VocabularyMismatch(format!("ground-truth predicate {} outside vocabulary", t.2)));
        }
        if let Some(e) = pred.edges().find(|e| e.votes.keys().any(|&p| p >= n)) {
            return Err(EvalError::VocabularyMismatch(format!("edge {} -> {} votes outside vocabulary", e.subject, e.object)));
        }
    }
    Ok(())
}

/// Object, predicate and relationship recall with per-class means. Predicted
/// triplets are not capped; each matched edge contributes its majority predicate.
pub fn compute_recalls<T: Real>(
    matching: &MatchResult,
    pred: &GlobalSsg<T>,
    gt: &GroundTruthScene,
    vocab: &ClassVocabulary,
) -> Result<RecallReport, EvalError> {
    check_vocabulary(pred, gt, vocab)?;
    let inverse = matching.inverse();
    let class_of = |inst: u64| gt.instance(inst).map(|i| i.class_id);
    // Matched node per instance, and whether its class is right.
    let node_for = |inst: u64| {
        inverse.get(&inst).map(|&n| {
            let node_class = pred.node(n).map(|x| x.class_id);
            (n, node_class.is_some() && node_class == class_of(inst))
        })
    };

    let mut obj_tally: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut matched = 0;
    let mut correct = 0;
    for inst in &gt.instances {
        let e = obj_tally.entry(inst.class_id).or_default();
        e.0 += 1;
        if let Some((_, ok)) = node_for(inst.id) {
            matched += 1;
            if ok {
                correct += 1;
                e.1 += 1;
            }
        }
    }

    let none = vocab.none_predicate();
    let mut pred_tally: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut n_triplets = 0;
    let mut endpoint_matched = 0;
    let mut predicate_hits = 0;
    let mut relationship_hits = 0;
    for &(s, o, p) in &gt.triplets {
        if Some(p) == none {
            continue;
        }
        n_triplets += 1;
        // Every GT predicate gets a row; its denominator is the matched-endpoint triplets.
        let e = pred_tally.entry(p).or_default();
        let (Some((ns, s_ok)), Some((no, o_ok))) = (node_for(s), node_for(o)) else { continue };
        e.0 += 1;
        endpoint_matched += 1;
        let top = pred.edge(ns, no).and_then(|edge| resolve_predicate(edge).ok());
        if top == Some(p) {
            predicate_hits += 1;
            e.1 += 1;
            if s_ok && o_ok {
                relationship_hits += 1;
            }
        }
    }

    let per_class_object = class_rows(obj_tally, |c| vocab.object_name(c));
    let per_class_predicate = class_rows(pred_tally, |p| vocab.predicate_name(p));
    let with_points: Vec<_> = pred.nodes().filter(|n| !n.eval_points.is_empty()).collect();
    let centroid_only = !with_points.is_empty() && with_points.iter().all(|n| n.eval_points.seen <= n.weight);

    Ok(RecallReport {
        object_recall: ratio(correct, gt.instances.len()),
        predicate_recall: ratio(predicate_hits, endpoint_matched),
        relationship_recall: ratio(relationship_hits, n_triplets),
        object_mrecall: mean_recall(&per_class_object),
        predicate_mrecall: mean_recall(&per_class_predicate),
        per_class_object,
        per_class_predicate,
        counts: RecallCounts {
            gt_instances: gt.instances.len(),
            matched_instances: matched,
            correct_class_instances: correct,
            gt_triplets: n_triplets,
            triplets_endpoints_matched: endpoint_matched,
            pred_nodes: pred.node_count(),
            pred_edges: pred.edge_count(),
        },
        centroid_only,
    })
}
