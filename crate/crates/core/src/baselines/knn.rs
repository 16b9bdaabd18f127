use serde::{Deserialize, Serialize};

use crate::clustering::DistanceFn;
use crate::error::{BetError, Result};
use crate::harness::Policy;
use crate::pool::{ActionId, ExperiencePool};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub distance: DistanceFn,
    pub state_dim: usize,
    pub action_count: usize,
    /// Stored states, row-major.
    pub states: Vec<f64>,
    pub labels: Vec<ActionId>,
}

pub fn fit_knn(pool: &ExperiencePool, k: usize, distance: DistanceFn) -> Result<KnnModel> {
    pool.ensure_non_empty()?;
    if k == 0 || k > pool.len() {
        return Err(BetError::Config(format!("k must be in 1..={} (pool size)", pool.len())));
    }
    Ok(KnnModel {
        k,
        distance,
        state_dim: pool.state_dim(),
        action_count: pool.action_count(),
        states: pool.iter().flat_map(|e| e.state.iter().copied()).collect(),
        labels: pool.iter().map(|e| e.action).collect(),
    })
}

impl KnnModel {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Majority vote of the `k` nearest stored states. Equal distances keep
    /// insertion order; tied votes go to the lowest class id.
    pub fn predict(&self, s: &[f64]) -> ActionId {
        let mut dist: Vec<(f64, usize)> = self
            .states
            .chunks_exact(self.state_dim)
            .enumerate()
            .map(|(i, row)| (self.distance.eval(s, row), i))
            .collect();
        let key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, key);
        }
        let mut votes = vec![0usize; self.action_count];
        for &(_, i) in &dist[..self.k] {
            votes[self.labels[i].0] += 1;
        }
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        ActionId(best)
    }
}

impl Policy for KnnModel {
    fn name(&self) -> &str {
        "knn"
    }

    fn action_count(&self) -> usize {
        self.action_count
    }

    fn act(&self, s: &[f64]) -> ActionId {
        self.predict(s)
    }
}
