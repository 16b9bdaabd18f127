//! Experience pools: the flattened state/action pairs collected from a teacher.

use std::collections::HashSet;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{BetError, Result};

/// Dense, finite, fixed-length state vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(BetError::Empty("state vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BetError::NonFinite { episode: 0, step: 0 });
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for StateVector {
    type Error = BetError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

/// Index into a task's discrete action set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub state: StateVector,
    pub action: ActionId,
    pub episode: u64,
    pub step: u64,
}

/// Immutable collection of experiences sharing one state dimension and action set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperiencePool {
    state_dim: usize,
    action_count: usize,
    experiences: Vec<Experience>,
}

impl ExperiencePool {
    /// Validates every experience against the declared dimension and action count.
    pub fn new(state_dim: usize, action_count: usize, experiences: Vec<Experience>) -> Result<Self> {
        if state_dim == 0 {
            return Err(BetError::Config("state_dim must be positive".into()));
        }
        if action_count == 0 {
            return Err(BetError::Config("action_count must be positive".into()));
        }
        let mut seen = HashSet::with_capacity(experiences.len());
        for e in &experiences {
            if e.state.dim() != state_dim {
                return Err(BetError::EpisodeDimension {
                    episode: e.episode,
                    step: e.step,
                    expected: state_dim,
                    got: e.state.dim(),
                });
            }
            if e.state.iter().any(|v| !v.is_finite()) {
                return Err(BetError::NonFinite { episode: e.episode, step: e.step });
            }
            if e.action.0 >= action_count {
                return Err(BetError::ActionOutOfRange { action: e.action.0, action_count });
            }
            if !seen.insert((e.episode, e.step)) {
                return Err(BetError::DuplicateStep { episode: e.episode, step: e.step });
            }
        }
        Ok(Self { state_dim, action_count, experiences })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn experiences(&self) -> &[Experience] {
        &self.experiences
    }

    pub fn len(&self) -> usize {
        self.experiences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiences.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Experience> {
        self.experiences.iter()
    }

    /// Sub-pool of the experiences whose episode satisfies `keep`, in original order.
    pub fn filter_episodes(&self, mut keep: impl FnMut(u64) -> bool) -> ExperiencePool {
        ExperiencePool {
            state_dim: self.state_dim,
            action_count: self.action_count,
            experiences: self.experiences.iter().filter(|e| keep(e.episode)).cloned().collect(),
        }
    }

    pub(crate) fn ensure_non_empty(&self) -> Result<()> {
        if self.experiences.is_empty() {
            return Err(BetError::Empty("experience pool".into()));
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a ExperiencePool {
    type Item = &'a Experience;
    type IntoIter = std::slice::Iter<'a, Experience>;

    fn into_iter(self) -> Self::IntoIter {
        self.experiences.iter()
    }
}

/// The members of a pool that share one action.
#[derive(Debug, Clone)]
pub struct ClassSubset<'a> {
    pub class_id: ActionId,
    pub members: Vec<&'a Experience>,
}

impl ClassSubset<'_> {
    pub fn states(&self) -> Vec<&[f64]> {
        self.members.iter().map(|e| e.state.as_slice()).collect()
    }
}

/// Flattens teacher episodes into a pool. Episode and step indices are the
/// positions in `trajectories`.
pub fn build_pool(
    trajectories: &[Vec<(StateVector, ActionId)>],
    action_count: usize,
) -> Result<ExperiencePool> {
    let first = trajectories
        .iter()
        .find_map(|ep| ep.first())
        .ok_or_else(|| BetError::Empty("no trajectories".into()))?;
    let state_dim = first.0.dim();

    let mut experiences = Vec::with_capacity(trajectories.iter().map(Vec::len).sum());
    for (episode, steps) in trajectories.iter().enumerate() {
        if steps.is_empty() {
            return Err(BetError::Empty(format!("episode {episode} has no steps")));
        }
        for (step, (state, action)) in steps.iter().enumerate() {
            if state.dim() != state_dim {
                return Err(BetError::EpisodeDimension {
                    episode: episode as u64,
                    step: step as u64,
                    expected: state_dim,
                    got: state.dim(),
                });
            }
            experiences.push(Experience {
                state: state.clone(),
                action: *action,
                episode: episode as u64,
                step: step as u64,
            });
        }
    }
    ExperiencePool::new(state_dim, action_count, experiences)
}

/// Partitions the pool by action. Only classes with members are returned,
/// sorted by class id; members keep pool order.
pub fn split_by_class(pool: &ExperiencePool) -> Vec<ClassSubset<'_>> {
    let mut buckets: Vec<Vec<&Experience>> = vec![Vec::new(); pool.action_count()];
    for e in pool {
        buckets[e.action.0].push(e);
    }
    buckets
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(c, members)| ClassSubset { class_id: ActionId(c), members })
        .collect()
}
