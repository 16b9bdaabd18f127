//! Posterior inference: Gaussian-kernel similarities to Bones, a softmax over
//! per-class similarity sums at each branch node, and descent to a leaf.

use serde::Serialize;

use crate::clustering::{Bone, DistanceFn};
use crate::pool::ActionId;
use crate::tree::{argmax_lowest, BetTree, BranchNode, Node};

/// `exp(-d^2 / (2 sigma^2))` for the configured distance `d`.
pub fn kernel_similarity(s: &[f64], bone: &Bone, sigma: f64, distance: DistanceFn) -> f64 {
    let d = distance.eval(s, &bone.center);
    (-(d * d) / (2.0 * sigma * sigma)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodePosterior {
    pub node_id: usize,
    /// Classes at this node, in branch order (ascending id).
    pub classes: Vec<ActionId>,
    /// Kernel similarity to every bone, grouped per class.
    pub similarities: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub posterior: Vec<f64>,
    pub chosen_class: ActionId,
    pub margin: f64,
    /// Class chosen by the mean-distance training filter at this node.
    pub filter_class: ActionId,
}

impl NodePosterior {
    pub fn chosen_index(&self) -> usize {
        self.classes.iter().position(|&c| c == self.chosen_class).expect("chosen class is a node class")
    }

    pub fn posterior_of(&self, class: ActionId) -> Option<f64> {
        self.classes.iter().position(|&c| c == class).map(|i| self.posterior[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorReport {
    /// Posteriors of the branch nodes visited, root first. Empty for a single-leaf tree.
    pub path: Vec<NodePosterior>,
    pub leaf_id: usize,
    pub predicted_action: ActionId,
    pub leaf_distribution: Vec<f64>,
    /// Nodes on the path where kernel routing and the mean-distance filter disagree.
    pub filter_disagreements: usize,
}

/// Posterior over the classes of one branch node.
///
/// Per class `i`, `u_i = softmax_i(sum_j sim(s, B_ij))`; the posterior is `u`
/// divided by its sum. Exponents are shifted by their maximum first.
pub fn node_posterior(node: &BranchNode, s: &[f64], distance: DistanceFn) -> NodePosterior {
    let similarities: Vec<Vec<f64>> = node
        .branches
        .iter()
        .map(|b| b.bones.iter().map(|bone| kernel_similarity(s, bone, node.sigma, distance)).collect())
        .collect();
    let sums: Vec<f64> = similarities.iter().map(|v: &Vec<f64>| v.iter().sum()).collect();
    let top = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = sums.iter().map(|x| (x - top).exp()).collect();
    let z: f64 = exps.iter().sum();
    let u: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let total: f64 = u.iter().sum();
    let posterior: Vec<f64> = u.iter().map(|x| x / total).collect();

    let best = argmax_lowest(&posterior);
    let margin = if posterior.len() < 2 {
        1.0
    } else {
        let runner_up = posterior
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != best)
            .map(|(_, &p)| p)
            .fold(f64::NEG_INFINITY, f64::max);
        (posterior[best] - runner_up).clamp(0.0, 1.0)
    };
    NodePosterior {
        node_id: node.node_id,
        classes: node.classes().collect(),
        similarities,
        u,
        posterior,
        chosen_class: node.branches[best].class_id,
        margin,
        filter_class: node.route(s, distance),
    }
}

impl BetTree {
    /// Descends from the root by posterior argmax and reports every node visited.
    ///
    /// # Panics
    /// If `s` does not have the tree's state dimension; see [`BetTree::check_dim`].
    pub fn predict(&self, s: &[f64]) -> PosteriorReport {
        assert_eq!(s.len(), self.state_dim, "state dimension mismatch");
        let distance = self.config.distance;
        let mut path = Vec::new();
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf(leaf) => {
                    let filter_disagreements =
                        path.iter().filter(|p: &&NodePosterior| p.chosen_class != p.filter_class).count();
                    return PosteriorReport {
                        path,
                        leaf_id: leaf.node_id,
                        predicted_action: leaf.predicted_class,
                        leaf_distribution: leaf.class_distribution.clone(),
                        filter_disagreements,
                    };
                }
                Node::Branch(b) => {
                    let post = node_posterior(b, s, distance);
                    node = &b.branches[post.chosen_index()].child;
                    path.push(post);
                }
            }
        }
    }

    /// Predicted action only; same descent as [`BetTree::predict`] without the report.
    pub fn predict_action(&self, s: &[f64]) -> ActionId {
        assert_eq!(s.len(), self.state_dim, "state dimension mismatch");
        let distance = self.config.distance;
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf(leaf) => return leaf.predicted_class,
                Node::Branch(b) => node = &b.branches[kernel_choice(b, s, distance)].child,
            }
        }
    }
}

/// Branch index with the largest similarity sum. The softmax is monotone, so
/// this is the posterior argmax.
fn kernel_choice(node: &BranchNode, s: &[f64], distance: DistanceFn) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, b) in node.branches.iter().enumerate() {
        let sum: f64 = b.bones.iter().map(|bone| kernel_similarity(s, bone, node.sigma, distance)).sum();
        if sum > best.1 {
            best = (i, sum);
        }
    }
    best.0
}
