use serde::{Deserialize, Serialize};

use crate::error::{BetError, Result};
use crate::harness::Policy;
use crate::pool::{ActionId, ExperiencePool};
use crate::tree::argmax_lowest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Impurity {
    Gini,
    Entropy,
}

impl Impurity {
    fn of(self, counts: &[usize], total: usize) -> f64 {
        if total == 0 {
            return 0.0;
        }
        let n = total as f64;
        match self {
            Impurity::Gini => 1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>(),
            Impurity::Entropy => -counts
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let p = c as f64 / n;
                    p * p.log2()
                })
                .sum::<f64>(),
        }
    }

    /// Format tag used in model documents.
    pub fn tag(self) -> &'static str {
        match self {
            Impurity::Gini => "cart",
            Impurity::Entropy => "id3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AxisNode {
    /// Samples with `state[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { distribution: Vec<f64>, predicted: ActionId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisTree {
    pub impurity: Impurity,
    pub max_depth: usize,
    pub min_split: usize,
    pub state_dim: usize,
    pub action_count: usize,
    /// Arena; the root is node 0.
    pub nodes: Vec<AxisNode>,
}

/// Greedy binary tree on impurity decrease. Candidate thresholds are the
/// midpoints between adjacent distinct feature values; ties prefer the
/// lowest feature index, then the lowest threshold.
pub fn fit_axis_tree(
    pool: &ExperiencePool,
    impurity: Impurity,
    max_depth: usize,
    min_split: usize,
) -> Result<AxisTree> {
    pool.ensure_non_empty()?;
    if min_split < 2 {
        return Err(BetError::Config("min_split must be >= 2".into()));
    }
    let mut tree = AxisTree {
        impurity,
        max_depth,
        min_split,
        state_dim: pool.state_dim(),
        action_count: pool.action_count(),
        nodes: Vec::new(),
    };
    let idx: Vec<usize> = (0..pool.len()).collect();
    grow(&mut tree, pool, idx, 0);
    Ok(tree)
}

fn grow(tree: &mut AxisTree, pool: &ExperiencePool, idx: Vec<usize>, depth: usize) -> usize {
    let exps = pool.experiences();
    let mut counts = vec![0usize; tree.action_count];
    for &i in &idx {
        counts[exps[i].action.0] += 1;
    }
    let slot = tree.nodes.len();
    let leaf = |counts: &[usize]| {
        let n: usize = counts.iter().sum();
        let distribution: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let predicted = ActionId(argmax_lowest(&distribution));
        AxisNode::Leaf { distribution, predicted }
    };
    tree.nodes.push(leaf(&counts));

    let parent = tree.impurity.of(&counts, idx.len());
    if depth >= tree.max_depth || idx.len() < tree.min_split || parent <= 0.0 {
        return slot;
    }
    let Some((feature, threshold)) = best_split(tree, pool, &idx, parent) else {
        return slot;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| exps[i].state[feature] <= threshold);
    let left = grow(tree, pool, l, depth + 1);
    let right = grow(tree, pool, r, depth + 1);
    tree.nodes[slot] = AxisNode::Split { feature, threshold, left, right };
    slot
}

fn best_split(tree: &AxisTree, pool: &ExperiencePool, idx: &[usize], parent: f64) -> Option<(usize, f64)> {
    let exps = pool.experiences();
    let n = idx.len();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = idx.to_vec();
    for f in 0..tree.state_dim {
        order.sort_by(|&a, &b| exps[a].state[f].total_cmp(&exps[b].state[f]).then(a.cmp(&b)));
        let mut left = vec![0usize; tree.action_count];
        let mut right = vec![0usize; tree.action_count];
        for &i in &order {
            right[exps[i].action.0] += 1;
        }
        for k in 0..n - 1 {
            let a = exps[order[k]].action.0;
            left[a] += 1;
            right[a] -= 1;
            let (x0, x1) = (exps[order[k]].state[f], exps[order[k + 1]].state[f]);
            if x0 == x1 {
                continue;
            }
            let nl = k + 1;
            let nr = n - nl;
            let child = (nl as f64 * tree.impurity.of(&left, nl) + nr as f64 * tree.impurity.of(&right, nr))
                / n as f64;
            let gain = parent - child;
            if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                best = Some((gain, f, 0.5 * (x0 + x1)));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

impl AxisTree {
    pub fn predict(&self, s: &[f64]) -> ActionId {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                AxisNode::Leaf { predicted, .. } => return *predicted,
                AxisNode::Split { feature, threshold, left, right } => {
                    at = if s[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[AxisNode], at: usize) -> usize {
            match &nodes[at] {
                AxisNode::Leaf { .. } => 0,
                AxisNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

impl Policy for AxisTree {
    fn name(&self) -> &str {
        self.impurity.tag()
    }

    fn action_count(&self) -> usize {
        self.action_count
    }

    fn act(&self, s: &[f64]) -> ActionId {
        self.predict(s)
    }
}
