//! The Backbone: a multiway tree whose branch nodes hold per-class Bone sets
//! and route samples to the class whose Bones are closest on average.

use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_points, nearest, Bone, DistanceFn, LloydOptions};
use crate::error::{BetError, Result};
use crate::pool::{ActionId, ExperiencePool};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SigmaMode {
    Fixed { value: f64 },
    /// Median distance from a node's samples to their nearest same-class bone.
    PerNodeMedian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetConfig {
    pub n_bones: usize,
    pub max_depth: usize,
    pub min_split: usize,
    pub distance: DistanceFn,
    pub sigma_mode: SigmaMode,
    pub seed: u64,
    pub lloyd_max_iters: usize,
    pub lloyd_tol: f64,
}

impl Default for BetConfig {
    fn default() -> Self {
        Self {
            n_bones: 4,
            max_depth: 4,
            min_split: 2,
            distance: DistanceFn::Euclidean,
            sigma_mode: SigmaMode::PerNodeMedian,
            seed: 0,
            lloyd_max_iters: 100,
            lloyd_tol: 1e-9,
        }
    }
}

impl BetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(BetError::Config(msg.to_string()));
        if self.n_bones < 1 {
            return bad("n_bones must be >= 1");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be >= 1");
        }
        if self.min_split < 2 {
            return bad("min_split must be >= 2");
        }
        if self.lloyd_max_iters < 1 {
            return bad("lloyd_max_iters must be >= 1");
        }
        if !(self.lloyd_tol > 0.0 && self.lloyd_tol.is_finite()) {
            return bad("lloyd_tol must be a positive finite number");
        }
        if let SigmaMode::Fixed { value } = self.sigma_mode {
            if !(value > 0.0 && value.is_finite()) {
                return bad("fixed sigma must be a positive finite number");
            }
        }
        Ok(())
    }
}

/// One class's Bones at a branch node, together with the subtree that class routes to.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub class_id: ActionId,
    pub bones: Vec<Bone>,
    /// Cluster sum of distances of this class's training samples at the node.
    pub css: f64,
    pub child: Node,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchNode {
    pub node_id: usize,
    pub depth: usize,
    /// Sorted by class id; one entry per class observed in this node's samples.
    pub branches: Vec<Branch>,
    pub sample_count: usize,
    pub path_probability: f64,
    pub sigma: f64,
    /// Summed per-class Lloyd objective after each refinement iteration.
    pub refinement_trace: Vec<f64>,
}

impl BranchNode {
    pub fn classes(&self) -> impl Iterator<Item = ActionId> + '_ {
        self.branches.iter().map(|b| b.class_id)
    }

    pub fn branch(&self, class: ActionId) -> Option<&Branch> {
        self.branches.iter().find(|b| b.class_id == class)
    }

    /// Class whose Bones have the smallest mean distance to `s`; ties go to
    /// the lowest class id.
    pub fn route(&self, s: &[f64], distance: DistanceFn) -> ActionId {
        self.route_index(s, distance).map(|i| self.branches[i].class_id).expect("branch node has classes")
    }

    pub(crate) fn route_index(&self, s: &[f64], distance: DistanceFn) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, b) in self.branches.iter().enumerate() {
            let mean = b.bones.iter().map(|bone| distance.eval(s, &bone.center)).sum::<f64>()
                / b.bones.len() as f64;
            if best.is_none_or(|(_, d)| mean < d) {
                best = Some((i, mean));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn bone_count(&self) -> usize {
        self.branches.iter().map(|b| b.bones.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub node_id: usize,
    pub depth: usize,
    pub class_distribution: Vec<f64>,
    pub predicted_class: ActionId,
    pub sample_count: usize,
}

impl Leaf {
    pub(crate) fn from_counts(node_id: usize, depth: usize, counts: &[usize]) -> Leaf {
        let total: usize = counts.iter().sum();
        let class_distribution: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        let predicted_class = ActionId(argmax_lowest(&class_distribution));
        Leaf { node_id, depth, class_distribution, predicted_class, sample_count: total }
    }

    fn one_hot(node_id: usize, depth: usize, class: ActionId, action_count: usize) -> Leaf {
        let mut class_distribution = vec![0.0; action_count];
        class_distribution[class.0] = 1.0;
        Leaf { node_id, depth, class_distribution, predicted_class: class, sample_count: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Branch(BranchNode),
    Leaf(Leaf),
}

impl Node {
    pub fn node_id(&self) -> usize {
        match self {
            Node::Branch(b) => b.node_id,
            Node::Leaf(l) => l.node_id,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Branch(b) => b.depth,
            Node::Leaf(l) => l.depth,
        }
    }

    pub fn sample_count(&self) -> usize {
        match self {
            Node::Branch(b) => b.sample_count,
            Node::Leaf(l) => l.sample_count,
        }
    }

    /// Pre-order traversal of every node in the subtree.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Node)) {
        visit(self);
        if let Node::Branch(b) = self {
            for br in &b.branches {
                br.child.walk(visit);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetTree {
    pub root: Node,
    pub config: BetConfig,
    /// Cost J after each completed level of the tree.
    pub training_cost_trace: Vec<f64>,
    pub state_dim: usize,
    pub action_count: usize,
}

impl BetTree {
    pub fn check_dim(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.state_dim {
            return Err(BetError::Dimension { expected: self.state_dim, got: s.len() });
        }
        Ok(())
    }

    pub fn branch_nodes(&self) -> Vec<&BranchNode> {
        let mut out = Vec::new();
        self.root.walk(&mut |n| {
            if let Node::Branch(b) = n {
                out.push(b);
            }
        });
        out
    }

    pub fn leaves(&self) -> Vec<&Leaf> {
        let mut out = Vec::new();
        self.root.walk(&mut |n| {
            if let Node::Leaf(l) = n {
                out.push(l);
            }
        });
        out
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.root.walk(&mut |_| n += 1);
        n
    }

    pub fn depth(&self) -> usize {
        let mut d = 0;
        self.root.walk(&mut |n| d = d.max(n.depth()));
        d
    }

    /// Node ids visited by the training-time filter (mean-distance routing), root to leaf.
    pub fn filter_path(&self, s: &[f64]) -> Vec<usize> {
        let mut path = Vec::new();
        let mut node = &self.root;
        loop {
            path.push(node.node_id());
            match node {
                Node::Leaf(_) => return path,
                Node::Branch(b) => {
                    let i = b.route_index(s, self.config.distance).expect("branch node has classes");
                    node = &b.branches[i].child;
                }
            }
        }
    }

    /// Path-probability-weighted sum of `ln(1 + CSS_c)` over branch nodes,
    /// evaluated on `pool` with mean-distance routing.
    pub fn cost_j(&self, pool: &ExperiencePool) -> Result<f64> {
        if pool.state_dim() != self.state_dim {
            return Err(BetError::Dimension { expected: self.state_dim, got: pool.state_dim() });
        }
        if pool.is_empty() {
            return Ok(0.0);
        }
        let idx: Vec<usize> = (0..pool.len()).collect();
        Ok(cost_at(&self.root, pool, &idx, self.config.distance, pool.len() as f64))
    }
}

fn cost_at(node: &Node, pool: &ExperiencePool, idx: &[usize], distance: DistanceFn, total: f64) -> f64 {
    let Node::Branch(b) = node else { return 0.0 };
    if idx.is_empty() {
        return 0.0;
    }
    let exps = pool.experiences();
    let mut local = 0.0;
    for br in &b.branches {
        let centers: Vec<Vec<f64>> = br.bones.iter().map(|bone| bone.center.clone()).collect();
        let sum: f64 = idx
            .iter()
            .filter(|&&i| exps[i].action == br.class_id)
            .map(|&i| {
                let (j, _) = nearest(&exps[i].state, &centers);
                distance.eval(&exps[i].state, &centers[j])
            })
            .sum();
        local += (sum * br.bones.len() as f64).ln_1p();
    }
    let mut routed: Vec<Vec<usize>> = vec![Vec::new(); b.branches.len()];
    for &i in idx {
        let r = b.route_index(&exps[i].state, distance).expect("branch node has classes");
        routed[r].push(i);
    }
    let mut j = idx.len() as f64 / total * local;
    for (br, sub) in b.branches.iter().zip(&routed) {
        j += cost_at(&br.child, pool, sub, distance, total);
    }
    j
}

/// Builds a tree by recursively clustering each class into Bones and routing
/// samples to the class with the nearest Bone set.
pub fn build(pool: &ExperiencePool, cfg: &BetConfig) -> Result<BetTree> {
    cfg.validate()?;
    pool.ensure_non_empty()?;
    let mut builder = Builder { pool, cfg, next_id: 0, level_costs: Vec::new() };
    let idx: Vec<usize> = (0..pool.len()).collect();
    let root = builder.node(&idx, 0)?;
    let mut acc = 0.0;
    let training_cost_trace = builder
        .level_costs
        .iter()
        .map(|c| {
            acc += c;
            acc
        })
        .collect();
    Ok(BetTree {
        root,
        config: *cfg,
        training_cost_trace,
        state_dim: pool.state_dim(),
        action_count: pool.action_count(),
    })
}

struct Builder<'a> {
    pool: &'a ExperiencePool,
    cfg: &'a BetConfig,
    next_id: usize,
    /// Per-depth sum of `P * sum_c ln(1 + CSS_c)` over branch nodes.
    level_costs: Vec<f64>,
}

impl Builder<'_> {
    fn take_id(&mut self) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn node(&mut self, idx: &[usize], depth: usize) -> Result<Node> {
        let exps = self.pool.experiences();
        let action_count = self.pool.action_count();
        let node_id = self.take_id();

        let mut counts = vec![0usize; action_count];
        for &i in idx {
            counts[exps[i].action.0] += 1;
        }
        let classes: Vec<ActionId> =
            (0..action_count).filter(|&c| counts[c] > 0).map(ActionId).collect();
        if classes.len() <= 1 || depth >= self.cfg.max_depth || idx.len() < self.cfg.min_split {
            return Ok(Node::Leaf(Leaf::from_counts(node_id, depth, &counts)));
        }

        // Cluster each class into Bones.
        let mut per_class = Vec::with_capacity(classes.len());
        for &c in &classes {
            let points: Vec<&[f64]> =
                idx.iter().filter(|&&i| exps[i].action == c).map(|&i| exps[i].state.as_slice()).collect();
            let opts = LloydOptions {
                n_bones: self.cfg.n_bones,
                distance: self.cfg.distance,
                seed: derive_seed(self.cfg.seed, node_id as u64, c.0 as u64),
                max_iters: self.cfg.lloyd_max_iters,
                tol: self.cfg.lloyd_tol,
            };
            per_class.push((c, points.clone(), cluster_points(c, &points, &opts)?));
        }

        let refinement_trace = merge_traces(per_class.iter().map(|(_, _, r)| r.objective_trace.as_slice()));
        let sigma = match self.cfg.sigma_mode {
            SigmaMode::Fixed { value } => value,
            SigmaMode::PerNodeMedian => {
                let mut d: Vec<f64> = per_class
                    .iter()
                    .flat_map(|(_, pts, r)| {
                        pts.iter().zip(&r.assignments).map(|(p, &a)| self.cfg.distance.eval(p, &r.bones[a].center))
                    })
                    .collect();
                let m = median(&mut d);
                if m > 0.0 { m } else { 1.0 }
            }
        };

        let mut node = BranchNode {
            node_id,
            depth,
            branches: per_class
                .into_iter()
                .map(|(class_id, _, r)| Branch {
                    class_id,
                    bones: r.bones,
                    css: r.css,
                    child: Node::Leaf(Leaf::one_hot(0, 0, class_id, action_count)),
                })
                .collect(),
            sample_count: idx.len(),
            path_probability: idx.len() as f64 / self.pool.len() as f64,
            sigma,
            refinement_trace,
        };

        let mut routed: Vec<Vec<usize>> = vec![Vec::new(); node.branches.len()];
        for &i in idx {
            let r = node.route_index(&exps[i].state, self.cfg.distance).expect("classes present");
            routed[r].push(i);
        }
        if routed.iter().any(|r| r.len() == idx.len()) {
            // Routing cannot separate these samples.
            return Ok(Node::Leaf(Leaf::from_counts(node_id, depth, &counts)));
        }

        let local: f64 = node.branches.iter().map(|b| b.css.ln_1p()).sum();
        if self.level_costs.len() <= depth {
            self.level_costs.resize(depth + 1, 0.0);
        }
        self.level_costs[depth] += node.path_probability * local;

        for (branch, sub) in node.branches.iter_mut().zip(&routed) {
            branch.child = if sub.is_empty() {
                let id = self.take_id();
                Node::Leaf(Leaf::one_hot(id, depth + 1, branch.class_id, action_count))
            } else {
                self.node(sub, depth + 1)?
            };
        }
        Ok(Node::Branch(node))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn merge_traces<'a>(traces: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let traces: Vec<&[f64]> = traces.collect();
    let len = traces.iter().map(|t| t.len()).max().unwrap_or(0);
    (0..len)
        .map(|i| traces.iter().map(|t| t[i.min(t.len() - 1)]).sum())
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// SplitMix64 over the combined inputs; stable across platforms.
pub(crate) fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::{build_pool, StateVector};

    pub(crate) fn pool_1d(points: &[(f64, usize)], action_count: usize) -> ExperiencePool {
        let ep = points
            .iter()
            .map(|&(x, a)| (StateVector::new(vec![x]).unwrap(), ActionId(a)))
            .collect();
        build_pool(&[ep], action_count).unwrap()
    }

    fn four_point() -> ExperiencePool {
        pool_1d(&[(0.0, 0), (1.0, 0), (10.0, 1), (11.0, 1)], 2)
    }

    fn cfg(n_bones: usize, max_depth: usize) -> BetConfig {
        BetConfig { n_bones, max_depth, ..BetConfig::default() }
    }

    #[test]
    fn single_class_pool_is_one_hot_leaf() {
        let pool = pool_1d(&[(0.0, 1), (3.0, 1), (5.0, 1)], 3);
        let tree = build(&pool, &cfg(2, 4)).unwrap();
        match &tree.root {
            Node::Leaf(l) => {
                assert_eq!(l.class_distribution, vec![0.0, 1.0, 0.0]);
                assert_eq!(l.predicted_class, ActionId(1));
                assert_eq!(l.sample_count, 3);
            }
            other => panic!("expected leaf, got {other:?}"),
        }
        assert!(tree.training_cost_trace.is_empty());
    }

    #[test]
    fn four_point_pool_splits_cleanly() {
        let tree = build(&four_point(), &cfg(1, 2)).unwrap();
        let Node::Branch(root) = &tree.root else { panic!("root should branch") };
        assert_eq!(root.branches.len(), 2);
        assert_eq!(root.branches[0].bones[0].center, vec![0.5]);
        assert_eq!(root.branches[1].bones[0].center, vec![10.5]);
        for (c, br) in root.branches.iter().enumerate() {
            let Node::Leaf(l) = &br.child else { panic!("child should be leaf") };
            assert_eq!(l.predicted_class, ActionId(c));
            assert_eq!(l.sample_count, 2);
            assert_eq!(l.class_distribution[c], 1.0);
        }
        assert_eq!(root.path_probability, 1.0);
    }

    #[test]
    fn max_depth_one_gives_leaf_children() {
        let pool = pool_1d(&[(0.0, 0), (0.4, 1), (1.0, 0), (1.3, 1), (2.0, 2), (2.2, 0)], 3);
        let tree = build(&pool, &cfg(2, 1)).unwrap();
        let Node::Branch(root) = &tree.root else { panic!("root should branch") };
        assert!(root.branches.iter().all(|b| matches!(b.child, Node::Leaf(_))));
    }

    #[test]
    fn route_examples() {
        let tree = build(&four_point(), &cfg(1, 2)).unwrap();
        let Node::Branch(root) = &tree.root else { unreachable!() };
        let d = DistanceFn::Euclidean;
        assert_eq!(root.route(&[0.5], d), ActionId(0));
        assert_eq!(root.route(&[4.0], d), ActionId(0));
        assert_eq!(root.route(&[5.5], d), ActionId(0));
        assert_eq!(root.route(&[5.6], d), ActionId(1));
    }

    #[test]
    fn cost_j_examples() {
        let pool = four_point();
        let tree = build(&pool, &cfg(1, 2)).unwrap();
        let j = tree.cost_j(&pool).unwrap();
        assert!((j - 2.0 * 2f64.ln()).abs() < 1e-12, "{j}");
        assert_eq!(tree.training_cost_trace.len(), 1);
        assert!((tree.training_cost_trace[0] - j).abs() < 1e-12);

        let single = pool_1d(&[(0.0, 0), (1.0, 0)], 2);
        assert_eq!(build(&single, &cfg(1, 2)).unwrap().cost_j(&single).unwrap(), 0.0);

        let coincident = pool_1d(&[(0.0, 0), (0.0, 0), (7.0, 1)], 2);
        let tree = build(&coincident, &cfg(1, 2)).unwrap();
        assert!(matches!(tree.root, Node::Branch(_)));
        assert_eq!(tree.cost_j(&coincident).unwrap(), 0.0);
    }

    #[test]
    fn unrouteable_samples_become_leaf() {
        // Identical states with different labels cannot be separated.
        let pool = pool_1d(&[(1.0, 0), (1.0, 1), (1.0, 1)], 2);
        let tree = build(&pool, &cfg(2, 5)).unwrap();
        let Node::Leaf(l) = &tree.root else { panic!("expected leaf") };
        assert_eq!(l.predicted_class, ActionId(1));
        assert!((l.class_distribution[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(tree.node_count(), 1);
    }

    #[test]
    fn min_split_stops_recursion() {
        let pool = pool_1d(&[(0.0, 0), (10.0, 1)], 2);
        let tree = build(&pool, &BetConfig { min_split: 3, ..cfg(1, 3) }).unwrap();
        assert!(matches!(tree.root, Node::Leaf(_)));
    }

    #[test]
    fn config_validation() {
        assert!(BetConfig { max_depth: 0, ..BetConfig::default() }.validate().is_err());
        assert!(BetConfig { n_bones: 0, ..BetConfig::default() }.validate().is_err());
        assert!(BetConfig { min_split: 1, ..BetConfig::default() }.validate().is_err());
        let fixed = BetConfig { sigma_mode: SigmaMode::Fixed { value: 0.0 }, ..BetConfig::default() };
        assert!(fixed.validate().unwrap_err().is_config());
    }

    #[test]
    fn node_ids_are_preorder_and_unique() {
        let pool = pool_1d(
            &[(0.0, 0), (0.3, 1), (0.9, 0), (1.4, 1), (2.0, 2), (2.1, 0), (3.0, 1), (3.3, 2), (4.0, 0)],
            3,
        );
        let tree = build(&pool, &cfg(2, 4)).unwrap();
        let mut ids = Vec::new();
        tree.root.walk(&mut |n| ids.push(n.node_id()));
        let expect: Vec<usize> = (0..ids.len()).collect();
        assert_eq!(ids, expect);
    }
}
