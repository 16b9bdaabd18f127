//! Explanations derived from a fitted tree: decision risk, minimal
//! decision-flipping perturbations, and a catalog of Bones with provenance.

use serde::{Deserialize, Serialize};

use crate::error::{BetError, Result};
use crate::pool::{ActionId, ExperiencePool};
use crate::tree::{BetTree, BranchNode, Node};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub state: Vec<f64>,
    /// `1 - min margin` over the branch nodes on the inference path.
    pub risk: f64,
    /// Node with the smallest margin; the leaf when the path has no branch nodes.
    pub weakest_node_id: usize,
    pub per_node_margins: Vec<(usize, f64)>,
}

/// Weakest-link risk: a single ambiguous routing decision is enough for an
/// error, so the path's smallest posterior margin sets the risk.
pub fn risk_score(tree: &BetTree, s: &[f64]) -> Result<RiskReport> {
    tree.check_dim(s)?;
    let report = tree.predict(s);
    let per_node_margins: Vec<(usize, f64)> = report.path.iter().map(|p| (p.node_id, p.margin)).collect();
    let (weakest_node_id, min_margin) = per_node_margins
        .iter()
        .copied()
        .fold((report.leaf_id, 1.0), |best, cur| if cur.1 < best.1 { cur } else { best });
    Ok(RiskReport { state: s.to_vec(), risk: 1.0 - min_margin, weakest_node_id, per_node_margins })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetBone {
    pub node_id: usize,
    pub class_id: ActionId,
    pub bone_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationResult {
    pub state: Vec<f64>,
    pub delta: Vec<f64>,
    pub perturbed_state: Vec<f64>,
    pub original_action: ActionId,
    pub new_action: ActionId,
    pub delta_norm: f64,
    pub target_bone: TargetBone,
    /// Search bound along the chosen direction: twice the distance to the target bone.
    pub alpha_max: f64,
    /// `predict(state + delta) != predict(state)`, re-evaluated.
    pub flip_verified: bool,
    /// `predict(state + (1 - tol) * delta) == predict(state)`, re-evaluated.
    /// Minimality holds along this direction only, not over all directions.
    pub directionally_minimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PerturbationOutcome {
    Flipped(PerturbationResult),
    /// No direction toward another class's bones flips the decision within range.
    NoFlipFound,
}

impl PerturbationOutcome {
    pub fn flipped(&self) -> Option<&PerturbationResult> {
        match self {
            PerturbationOutcome::Flipped(p) => Some(p),
            PerturbationOutcome::NoFlipFound => None,
        }
    }
}

const SCAN_STEPS: usize = 32;
const MAX_BISECTIONS: usize = 200;
const MAX_REFINEMENTS: usize = 16;

/// Smallest decision-flipping offset found by bisecting along the directions
/// from `s` toward every bone of every other class at the nodes on `s`'s
/// inference path. `targets` restricts which classes' bones are tried.
pub fn min_perturbation(
    tree: &BetTree,
    s: &[f64],
    targets: Option<&[ActionId]>,
    tol: f64,
) -> Result<PerturbationOutcome> {
    tree.check_dim(s)?;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(BetError::Config("tol must be in (0, 1)".into()));
    }
    let original = tree.predict_action(s);
    let mut best: Option<PerturbationResult> = None;

    for node in inference_path(tree, s) {
        for branch in &node.branches {
            if branch.class_id == original || targets.is_some_and(|t| !t.contains(&branch.class_id)) {
                continue;
            }
            for (bone_index, bone) in branch.bones.iter().enumerate() {
                let dir: Vec<f64> = bone.center.iter().zip(s).map(|(b, x)| b - x).collect();
                let dist = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
                if dist == 0.0 {
                    continue;
                }
                let unit: Vec<f64> = dir.iter().map(|d| d / dist).collect();
                let alpha_max = 2.0 * dist;
                let Some(alpha) = first_flip(tree, s, &unit, alpha_max, original, tol) else {
                    continue;
                };
                if best.as_ref().is_some_and(|b| alpha >= b.delta_norm) {
                    continue;
                }
                let delta: Vec<f64> = unit.iter().map(|u| u * alpha).collect();
                let perturbed_state = offset(s, &unit, alpha);
                let new_action = tree.predict_action(&perturbed_state);
                let shrunk = tree.predict_action(&offset(s, &unit, alpha * (1.0 - tol)));
                best = Some(PerturbationResult {
                    state: s.to_vec(),
                    delta,
                    perturbed_state,
                    original_action: original,
                    new_action,
                    delta_norm: alpha,
                    target_bone: TargetBone { node_id: node.node_id, class_id: branch.class_id, bone_index },
                    alpha_max,
                    flip_verified: new_action != original,
                    directionally_minimal: shrunk == original,
                });
            }
        }
    }
    Ok(best.map_or(PerturbationOutcome::NoFlipFound, PerturbationOutcome::Flipped))
}

/// Branch nodes visited by [`BetTree::predict`], root first.
fn inference_path<'a>(tree: &'a BetTree, s: &[f64]) -> Vec<&'a BranchNode> {
    let report = tree.predict(s);
    let mut out = Vec::with_capacity(report.path.len());
    let mut node = &tree.root;
    for step in &report.path {
        let Node::Branch(b) = node else { break };
        out.push(b);
        node = &b.branches[step.chosen_index()].child;
    }
    out
}

fn offset(s: &[f64], unit: &[f64], alpha: f64) -> Vec<f64> {
    s.iter().zip(unit).map(|(x, u)| x + alpha * u).collect()
}

/// Smallest scale in `(0, alpha_max]` at which the prediction along `unit`
/// differs from `original`, located by a coarse scan then bisection until
/// the bracket is narrower than `tol` of its upper end.
fn first_flip(tree: &BetTree, s: &[f64], unit: &[f64], alpha_max: f64, original: ActionId, tol: f64) -> Option<f64> {
    let flips = |a: f64| tree.predict_action(&offset(s, unit, a)) != original;
    let mut lo = 0.0;
    let mut hi = None;
    for k in 1..=SCAN_STEPS {
        let a = alpha_max * k as f64 / SCAN_STEPS as f64;
        if flips(a) {
            hi = Some(a);
            break;
        }
        lo = a;
    }
    let mut hi = hi?;
    for _ in 0..MAX_REFINEMENTS {
        for _ in 0..MAX_BISECTIONS {
            if hi - lo < tol * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if flips(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // The ray may re-enter the original region inside the bracket.
        let shrunk = hi * (1.0 - tol);
        if shrunk > lo && flips(shrunk) {
            hi = shrunk;
        } else {
            break;
        }
    }
    Some(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestExperience {
    pub episode: u64,
    pub step: u64,
    pub action: ActionId,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub node_id: usize,
    pub depth: usize,
    pub class_id: ActionId,
    pub bone_index: usize,
    pub center: Vec<f64>,
    pub member_count: usize,
    pub nearest: NearestExperience,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoneCatalog {
    pub entries: Vec<CatalogEntry>,
}

/// Every bone in the tree with the closest real experience in `pool`,
/// sorted by depth, then class, then node and bone index.
pub fn bone_catalog(tree: &BetTree, pool: &ExperiencePool) -> Result<BoneCatalog> {
    if pool.state_dim() != tree.state_dim {
        return Err(BetError::Dimension { expected: tree.state_dim, got: pool.state_dim() });
    }
    pool.ensure_non_empty()?;
    let mut entries = Vec::new();
    for node in tree.branch_nodes() {
        for branch in &node.branches {
            for (bone_index, bone) in branch.bones.iter().enumerate() {
                let (e, distance) = pool
                    .iter()
                    .map(|e| (e, tree.config.distance.eval(&e.state, &bone.center)))
                    .fold(None::<(&crate::pool::Experience, f64)>, |best, cur| match best {
                        Some(b) if b.1 <= cur.1 => Some(b),
                        _ => Some(cur),
                    })
                    .expect("pool is non-empty");
                entries.push(CatalogEntry {
                    node_id: node.node_id,
                    depth: node.depth,
                    class_id: branch.class_id,
                    bone_index,
                    center: bone.center.clone(),
                    member_count: bone.member_count,
                    nearest: NearestExperience { episode: e.episode, step: e.step, action: e.action, distance },
                });
            }
        }
    }
    entries.sort_by_key(|e| (e.depth, e.class_id, e.node_id, e.bone_index));
    Ok(BoneCatalog { entries })
}
