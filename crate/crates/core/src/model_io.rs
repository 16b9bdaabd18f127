//! Versioned JSON model documents.
//!
//! Every document is an object `{"format": <tag>, "version": 1, "model": {...}}`
//! with tag `bet`, `cart`, `id3` or `knn`. Documents are parsed to a generic
//! value first so that format and version problems are reported before any
//! schema error.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::{AxisNode, AxisTree, Impurity, KnnModel};
use crate::clustering::Bone;
use crate::error::{BetError, Result};
use crate::harness::Policy;
use crate::pool::ActionId;
use crate::tree::{BetConfig, BetTree, Branch, BranchNode, Leaf, Node};

pub const FORMAT_VERSION: u64 = 1;
pub const FORMAT_TAGS: [&str; 4] = ["bet", "cart", "id3", "knn"];

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    format: &'a str,
    version: u64,
    model: &'a T,
}

#[derive(Serialize, Deserialize)]
struct BetDoc {
    config: BetConfig,
    state_dim: usize,
    action_count: usize,
    training_cost_trace: Vec<f64>,
    root: NodeDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum NodeDoc {
    Branch {
        node_id: usize,
        depth: usize,
        sample_count: usize,
        path_probability: f64,
        sigma: f64,
        refinement_trace: Vec<f64>,
        branches: Vec<BranchDoc>,
    },
    Leaf {
        node_id: usize,
        depth: usize,
        sample_count: usize,
        class_distribution: Vec<f64>,
        predicted_class: ActionId,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchDoc {
    class_id: ActionId,
    css: f64,
    /// Bone centers concatenated row-major, `member_counts.len() * state_dim` values.
    bones: Vec<f64>,
    member_counts: Vec<usize>,
    child: NodeDoc,
}

impl NodeDoc {
    fn from_node(node: &Node) -> NodeDoc {
        match node {
            Node::Leaf(l) => NodeDoc::Leaf {
                node_id: l.node_id,
                depth: l.depth,
                sample_count: l.sample_count,
                class_distribution: l.class_distribution.clone(),
                predicted_class: l.predicted_class,
            },
            Node::Branch(b) => NodeDoc::Branch {
                node_id: b.node_id,
                depth: b.depth,
                sample_count: b.sample_count,
                path_probability: b.path_probability,
                sigma: b.sigma,
                refinement_trace: b.refinement_trace.clone(),
                branches: b
                    .branches
                    .iter()
                    .map(|br| BranchDoc {
                        class_id: br.class_id,
                        css: br.css,
                        bones: br.bones.iter().flat_map(|bone| bone.center.iter().copied()).collect(),
                        member_counts: br.bones.iter().map(|bone| bone.member_count).collect(),
                        child: NodeDoc::from_node(&br.child),
                    })
                    .collect(),
            },
        }
    }

    fn into_node(self, dim: usize, action_count: usize, seen: &mut Vec<usize>) -> Result<Node> {
        match self {
            NodeDoc::Leaf { node_id, depth, sample_count, class_distribution, predicted_class } => {
                note_id(seen, node_id)?;
                if class_distribution.len() != action_count {
                    return Err(schema(format!("leaf {node_id}: distribution has {} entries", class_distribution.len())));
                }
                if class_distribution.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(schema(format!("leaf {node_id}: invalid distribution")));
                }
                check_action(predicted_class, action_count)?;
                Ok(Node::Leaf(Leaf { node_id, depth, class_distribution, predicted_class, sample_count }))
            }
            NodeDoc::Branch { node_id, depth, sample_count, path_probability, sigma, refinement_trace, branches } => {
                note_id(seen, node_id)?;
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(schema(format!("branch {node_id}: sigma must be positive")));
                }
                if branches.is_empty() {
                    return Err(schema(format!("branch {node_id}: no branches")));
                }
                let mut out = Vec::with_capacity(branches.len());
                for br in branches {
                    check_action(br.class_id, action_count)?;
                    if out.last().is_some_and(|prev: &Branch| prev.class_id >= br.class_id) {
                        return Err(schema(format!("branch {node_id}: classes not strictly ascending")));
                    }
                    if br.member_counts.is_empty() || br.bones.len() != br.member_counts.len() * dim {
                        return Err(schema(format!(
                            "branch {node_id}, class {}: {} bone values for {} bones of dimension {dim}",
                            br.class_id,
                            br.bones.len(),
                            br.member_counts.len()
                        )));
                    }
                    if br.bones.iter().any(|x| !x.is_finite()) {
                        return Err(schema(format!("branch {node_id}: non-finite bone value")));
                    }
                    let bones = br
                        .bones
                        .chunks(dim)
                        .zip(&br.member_counts)
                        .map(|(c, &member_count)| Bone { class_id: br.class_id, center: c.to_vec(), member_count })
                        .collect();
                    let child = br.child.into_node(dim, action_count, seen)?;
                    out.push(Branch { class_id: br.class_id, bones, css: br.css, child });
                }
                Ok(Node::Branch(BranchNode {
                    node_id,
                    depth,
                    branches: out,
                    sample_count,
                    path_probability,
                    sigma,
                    refinement_trace,
                }))
            }
        }
    }
}

fn note_id(seen: &mut Vec<usize>, id: usize) -> Result<()> {
    if seen.contains(&id) {
        return Err(schema(format!("duplicate node id {id}")));
    }
    seen.push(id);
    Ok(())
}

fn check_action(a: ActionId, action_count: usize) -> Result<()> {
    if a.0 >= action_count {
        return Err(BetError::ActionOutOfRange { action: a.0, action_count });
    }
    Ok(())
}

fn schema(msg: String) -> BetError {
    BetError::Schema(msg)
}

/// A fitted model of any supported kind.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Bet(BetTree),
    Axis(AxisTree),
    Knn(KnnModel),
}

impl AnyModel {
    pub fn format_tag(&self) -> &'static str {
        match self {
            AnyModel::Bet(_) => "bet",
            AnyModel::Axis(t) => t.impurity.tag(),
            AnyModel::Knn(_) => "knn",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            AnyModel::Bet(t) => t.state_dim,
            AnyModel::Axis(t) => t.state_dim,
            AnyModel::Knn(m) => m.state_dim,
        }
    }

    pub fn to_json(&self) -> String {
        match self {
            AnyModel::Bet(t) => bet_to_json(t),
            AnyModel::Axis(t) => envelope(t.impurity.tag(), t),
            AnyModel::Knn(m) => envelope("knn", m),
        }
    }

    pub fn from_json(text: &str) -> Result<AnyModel> {
        let (tag, model) = open_envelope(text, None)?;
        match tag.as_str() {
            "bet" => bet_from_value(model).map(AnyModel::Bet),
            "cart" | "id3" => {
                let t: AxisTree = from_model(model)?;
                let want = if tag == "cart" { Impurity::Gini } else { Impurity::Entropy };
                if t.impurity != want {
                    return Err(schema(format!("{tag} document holds a {:?} tree", t.impurity)));
                }
                validate_axis(&t)?;
                Ok(AnyModel::Axis(t))
            }
            _ => {
                let m: KnnModel = from_model(model)?;
                validate_knn(&m)?;
                Ok(AnyModel::Knn(m))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<AnyModel> {
        AnyModel::from_json(&fs::read_to_string(path)?)
    }
}

impl Policy for AnyModel {
    fn name(&self) -> &str {
        self.format_tag()
    }

    fn action_count(&self) -> usize {
        match self {
            AnyModel::Bet(t) => t.action_count,
            AnyModel::Axis(t) => t.action_count,
            AnyModel::Knn(m) => m.action_count,
        }
    }

    fn act(&self, s: &[f64]) -> ActionId {
        match self {
            AnyModel::Bet(t) => t.predict_action(s),
            AnyModel::Axis(t) => t.predict(s),
            AnyModel::Knn(m) => m.predict(s),
        }
    }
}

fn envelope<T: Serialize>(format: &str, model: &T) -> String {
    serde_json::to_string(&EnvelopeOut { format, version: FORMAT_VERSION, model })
        .expect("model documents contain only finite numbers")
}

pub fn bet_to_json(tree: &BetTree) -> String {
    let doc = BetDoc {
        config: tree.config,
        state_dim: tree.state_dim,
        action_count: tree.action_count,
        training_cost_trace: tree.training_cost_trace.clone(),
        root: NodeDoc::from_node(&tree.root),
    };
    envelope("bet", &doc)
}

pub fn bet_from_json(text: &str) -> Result<BetTree> {
    let (_, model) = open_envelope(text, Some("bet"))?;
    bet_from_value(model)
}

fn bet_from_value(model: Value) -> Result<BetTree> {
    let doc: BetDoc = from_model(model)?;
    doc.config.validate()?;
    if doc.state_dim == 0 || doc.action_count == 0 {
        return Err(schema("state_dim and action_count must be positive".into()));
    }
    let root = doc.root.into_node(doc.state_dim, doc.action_count, &mut Vec::new())?;
    Ok(BetTree {
        root,
        config: doc.config,
        training_cost_trace: doc.training_cost_trace,
        state_dim: doc.state_dim,
        action_count: doc.action_count,
    })
}

fn validate_axis(t: &AxisTree) -> Result<()> {
    if t.nodes.is_empty() || t.state_dim == 0 {
        return Err(schema("axis tree has no nodes".into()));
    }
    for (i, n) in t.nodes.iter().enumerate() {
        match n {
            AxisNode::Split { feature, threshold, left, right } => {
                if *feature >= t.state_dim || !threshold.is_finite() {
                    return Err(schema(format!("node {i}: invalid split")));
                }
                // Children always follow their parent in the arena, which rules out cycles.
                if *left <= i || *right <= i || *left >= t.nodes.len() || *right >= t.nodes.len() {
                    return Err(schema(format!("node {i}: child index out of range")));
                }
            }
            AxisNode::Leaf { distribution, predicted } => {
                if distribution.len() != t.action_count {
                    return Err(schema(format!("node {i}: distribution has {} entries", distribution.len())));
                }
                check_action(*predicted, t.action_count)?;
            }
        }
    }
    Ok(())
}

fn validate_knn(m: &KnnModel) -> Result<()> {
    if m.state_dim == 0 || m.labels.is_empty() || m.states.len() != m.labels.len() * m.state_dim {
        return Err(schema("knn states do not match labels and state_dim".into()));
    }
    if m.k == 0 || m.k > m.labels.len() {
        return Err(schema(format!("k = {} outside 1..={}", m.k, m.labels.len())));
    }
    if m.states.iter().any(|x| !x.is_finite()) {
        return Err(schema("non-finite stored state".into()));
    }
    m.labels.iter().try_for_each(|&a| check_action(a, m.action_count))
}

fn from_model<T: for<'de> Deserialize<'de>>(model: Value) -> Result<T> {
    serde_json::from_value(model).map_err(|e| schema(e.to_string()))
}

/// Parses the envelope and returns the format tag and the `model` value.
fn open_envelope(text: &str, expect: Option<&str>) -> Result<(String, Value)> {
    let value: Value = serde_json::from_str(text).map_err(|e| BetError::Parse {
        offset: if e.is_eof() { text.len() } else { byte_offset(text, e.line(), e.column()) },
        message: e.to_string(),
    })?;
    let Value::Object(mut obj) = value else {
        return Err(schema("document is not an object".into()));
    };
    let tag = match obj.get("format") {
        Some(Value::String(s)) => s.clone(),
        _ => return Err(schema("missing string field \"format\"".into())),
    };
    if let Some(want) = expect {
        if tag != want {
            return Err(BetError::FormatTag { expected: want.into(), found: tag });
        }
    } else if !FORMAT_TAGS.contains(&tag.as_str()) {
        return Err(BetError::FormatTag { expected: FORMAT_TAGS.join("|"), found: tag });
    }
    let version = obj
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| schema("missing integer field \"version\"".into()))?;
    if version != FORMAT_VERSION {
        return Err(BetError::Version { format: tag, found: version, supported: FORMAT_VERSION });
    }
    let model = obj.remove("model").ok_or_else(|| schema("missing field \"model\"".into()))?;
    Ok((tag, model))
}

/// serde_json reports 1-based line and column; column 0 means the end of the previous line.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}
