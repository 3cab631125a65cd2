//! JSON graph document and Graphviz export.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::Gaussian3D;
use crate::io::IoError;
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

use super::{resolve_predicate, ClassVocabulary, EvalPoints, GlobalSsg, GraphError, NodeId, ObjectNode, Vote};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u64,
    pub class_id: usize,
    pub weight: u64,
    pub score_sum: f64,
    pub mean: [f64; 3],
    /// Row-major.
    pub cov: [f64; 9],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eval_points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub eval_points_seen: u64,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub subject: u64,
    pub object: u64,
    /// Majority-vote predicate.
    pub predicate: usize,
    /// predicate id -> (count, score_sum)
    pub votes: BTreeMap<usize, (u64, f64)>,
}

/// Serialized scene graph. Nodes sorted by id, edges by (subject, object).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    pub vocab: ClassVocabulary,
}

fn arr<T: Real, const N: usize>(v: impl Iterator<Item = T>) -> [f64; N] {
    let mut out = [0.0; N];
    for (dst, x) in out.iter_mut().zip(v) {
        *dst = x.as_f64();
    }
    out
}

impl GraphDocument {
    pub fn from_graph<T: Real>(g: &GlobalSsg<T>, vocab: &ClassVocabulary) -> Result<Self, GraphError> {
        let nodes = g
            .nodes()
            .map(|n| NodeRecord {
                id: n.id.0,
                class_id: n.class_id,
                weight: n.weight,
                score_sum: n.score_sum.as_f64(),
                mean: arr(n.gaussian.mean.iter()),
                cov: arr(n.gaussian.cov.iter()),
                eval_points: n.eval_points.points.iter().map(|p| arr(p.iter())).collect(),
                eval_points_seen: n.eval_points.seen,
            })
            .collect();
        let edges = g
            .edges()
            .map(|e| {
                Ok(EdgeRecord {
                    subject: e.subject.0,
                    object: e.object.0,
                    predicate: resolve_predicate(e)?,
                    votes: e.votes.iter().map(|(&p, v)| (p, (v.count, v.score_sum.as_f64()))).collect(),
                })
            })
            .collect::<Result<_, GraphError>>()?;
        Ok(Self { nodes, edges, vocab: vocab.clone() })
    }

    pub fn to_graph<T: Real>(&self) -> Result<GlobalSsg<T>, GraphError> {
        self.vocab.validate()?;
        let mut g = GlobalSsg::new();
        for r in &self.nodes {
            let mean = Vec3::from_array(r.mean.map(T::lit));
            let cov = Mat3::from_row_major(&r.cov.map(T::lit)).expect("nine entries");
            let node = ObjectNode {
                id: NodeId(r.id),
                class_id: r.class_id,
                gaussian: Gaussian3D::new(mean, cov),
                weight: r.weight,
                score_sum: T::lit(r.score_sum),
                eval_points: EvalPoints {
                    points: r.eval_points.iter().map(|p| Vec3::from_array(p.map(T::lit))).collect(),
                    seen: r.eval_points_seen,
                },
            };
            g.insert_with_id(node)?;
        }
        for e in &self.edges {
            let votes: BTreeMap<usize, Vote<T>> =
                e.votes.iter().map(|(&p, &(count, score))| (p, Vote { count, score_sum: T::lit(score) })).collect();
            g.add_votes(NodeId(e.subject), NodeId(e.object), &votes)?;
        }
        g.check_invariants()?;
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Graphviz rendering: nodes labeled `<class>#<id> (w=<weight>)`, edges by
    /// their resolved predicate.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph scene {\n");
        for n in &self.nodes {
            let label = format!("{}#{} (w={})", self.vocab.object_name(n.class_id), n.id, n.weight);
            out.push_str(&format!("  n{} [label=\"{}\"];\n", n.id, escape(&label)));
        }
        for e in &self.edges {
            out.push_str(&format!(
                "  n{} -> n{} [label=\"{}\"];\n",
                e.subject,
                e.object,
                escape(&self.vocab.predicate_name(e.predicate))
            ));
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn write_graph_json<T: Real>(path: impl AsRef<Path>, g: &GlobalSsg<T>, vocab: &ClassVocabulary) -> Result<(), IoError> {
    let doc = GraphDocument::from_graph(g, vocab).map_err(|e| IoError::Format(e.to_string()))?;
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| IoError::write(path, e))?;
    file.write_all(doc.to_json().as_bytes()).map_err(|e| IoError::write(path, e))
}

pub fn read_graph_json(path: impl AsRef<Path>) -> Result<GraphDocument, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::open(path, e))?;
    GraphDocument::from_json(&text)
}

pub fn write_dot<T: Real>(path: impl AsRef<Path>, g: &GlobalSsg<T>, vocab: &ClassVocabulary) -> Result<(), IoError> {
    let doc = GraphDocument::from_graph(g, vocab).map_err(|e| IoError::Format(e.to_string()))?;
    let path = path.as_ref();
    fs::write(path, doc.to_dot()).map_err(|e| IoError::write(path, e))
}
