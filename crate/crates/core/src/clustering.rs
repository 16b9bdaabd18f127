//! Per-class N-center clustering (Lloyd iterations) producing Bones, and the
//! cluster-sum-of-distances cost.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BetError, Result};
use crate::pool::{ActionId, ClassSubset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceFn {
    #[default]
    Euclidean,
    SquaredEuclidean,
}

impl DistanceFn {
    #[inline]
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        let sq = squared_euclidean(a, b);
        match self {
            DistanceFn::Euclidean => sq.sqrt(),
            DistanceFn::SquaredEuclidean => sq,
        }
    }
}

#[inline]
pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A representative state for one action class: the centroid of one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bone {
    pub class_id: ActionId,
    pub center: Vec<f64>,
    pub member_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydOptions {
    pub n_bones: usize,
    pub distance: DistanceFn,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LloydOptions {
    fn default() -> Self {
        Self { n_bones: 4, distance: DistanceFn::Euclidean, seed: 0, max_iters: 100, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub bones: Vec<Bone>,
    /// Bone index for each input point, in input order.
    pub assignments: Vec<usize>,
    pub css: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Sum of squared distances from each point to its nearest center: once
    /// for the seeded centers, then after every iteration.
    pub objective_trace: Vec<f64>,
}

impl ClusteringResult {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Clusters one class subset into at most `opts.n_bones` Bones.
pub fn cluster_class(subset: &ClassSubset<'_>, opts: &LloydOptions) -> Result<ClusteringResult> {
    cluster_points(subset.class_id, &subset.states(), opts)
}

/// Lloyd clustering over raw points.
///
/// The effective bone count is `min(n_bones, distinct points)`. Centers are
/// seeded k-means++ style from `opts.seed`. Iteration stops once centers move
/// less than `tol` and the assignment is stable, or after `max_iters`.
pub fn cluster_points(
    class_id: ActionId,
    points: &[&[f64]],
    opts: &LloydOptions,
) -> Result<ClusteringResult> {
    if points.is_empty() {
        return Err(BetError::Empty("class subset".into()));
    }
    if opts.n_bones == 0 {
        return Err(BetError::Config("n_bones must be at least 1".into()));
    }
    if opts.max_iters == 0 {
        return Err(BetError::Config("max_iters must be at least 1".into()));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(BetError::Dimension { expected: dim, got: p.len() });
    }

    let k = opts.n_bones.min(count_distinct(points));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut centers = seed_centers(points, k, &mut rng);
    let (mut assignments, first_obj) = assign(points, &centers);
    let mut trace = vec![first_obj];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iters {
        iterations += 1;
        let updated = update_centers(points, &assignments, &centers);
        let movement = centers
            .iter()
            .zip(&updated)
            .map(|(a, b)| squared_euclidean(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = updated;
        let (next, obj) = assign(points, &centers);
        trace.push(obj);
        let stable = next == assignments;
        assignments = next;
        if stable && movement < opts.tol {
            converged = true;
            break;
        }
    }

    let mut counts = vec![0usize; k];
    for &a in &assignments {
        counts[a] += 1;
    }
    // An unconverged run can end with a center that lost all its members.
    let mut remap = vec![usize::MAX; k];
    let mut bones = Vec::with_capacity(k);
    for (j, (center, member_count)) in centers.into_iter().zip(counts).enumerate() {
        if member_count > 0 {
            remap[j] = bones.len();
            bones.push(Bone { class_id, center, member_count });
        }
    }
    for a in assignments.iter_mut() {
        *a = remap[*a];
    }
    let css = css_points(&bones, &assignments, points, opts.distance);
    Ok(ClusteringResult { bones, assignments, css, iterations, converged, objective_trace: trace })
}

/// Runs `restarts` seeds (`opts.seed`, `opts.seed + 1`, ...) and keeps the
/// lowest Lloyd objective; ties keep the earliest seed.
pub fn cluster_points_multistart(
    class_id: ActionId,
    points: &[&[f64]],
    opts: &LloydOptions,
    restarts: usize,
) -> Result<ClusteringResult> {
    let mut best: Option<ClusteringResult> = None;
    for r in 0..restarts.max(1) {
        let o = LloydOptions { seed: opts.seed.wrapping_add(r as u64), ..*opts };
        let res = cluster_points(class_id, points, &o)?;
        if best.as_ref().is_none_or(|b| res.objective() < b.objective()) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Cluster sum of distances: sample count x bone count x mean sample-to-bone
/// distance, i.e. `bones.len() * sum_i d(x_i, bone(x_i))`.
pub fn css(
    bones: &[Bone],
    assignments: &[usize],
    subset: &ClassSubset<'_>,
    distance: DistanceFn,
) -> f64 {
    css_points(bones, assignments, &subset.states(), distance)
}

pub fn css_points(bones: &[Bone], assignments: &[usize], points: &[&[f64]], distance: DistanceFn) -> f64 {
    assert_eq!(assignments.len(), points.len(), "assignments must cover the subset");
    if points.is_empty() {
        return 0.0;
    }
    let total: f64 = points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| distance.eval(p, &bones[a].center))
        .sum();
    let n = points.len() as f64;
    n * bones.len() as f64 * (total / n)
}

/// Index and squared distance of the nearest center; ties go to the lowest index.
#[inline]
pub(crate) fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = squared_euclidean(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(points: &[&[f64]], centers: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut total = 0.0;
    let assignments = points
        .iter()
        .map(|p| {
            let (j, d) = nearest(p, centers);
            total += d;
            j
        })
        .collect();
    (assignments, total)
}

fn update_centers(points: &[&[f64]], assignments: &[usize], old: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let k = old.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    let mut centers: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .zip(old)
        .map(|((s, &n), prev)| {
            if n == 0 {
                prev.clone()
            } else {
                s.into_iter().map(|v| v / n as f64).collect()
            }
        })
        .collect();

    // Empty clusters move to the sample farthest from the live centers.
    let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
    if !empty.is_empty() {
        let mut live: Vec<Vec<f64>> =
            (0..k).filter(|&j| counts[j] > 0).map(|j| centers[j].clone()).collect();
        for j in empty {
            let far = points
                .iter()
                .enumerate()
                .map(|(i, p)| (i, nearest(p, &live).1))
                .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
            centers[j] = points[far.0].to_vec();
            live.push(centers[j].clone());
        }
    }
    centers
}

fn seed_centers(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..points.len())].to_vec());
    let mut d2: Vec<f64> = points.iter().map(|p| squared_euclidean(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let i = pick.expect("k never exceeds the number of distinct points");
        let c = points[i].to_vec();
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(squared_euclidean(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn count_distinct(points: &[&[f64]]) -> usize {
    points
        .iter()
        .map(|p| p.iter().map(|v| (v + 0.0).to_bits()).collect::<Vec<u64>>())
        .collect::<HashSet<_>>()
        .len()
}
