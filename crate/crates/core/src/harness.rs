//! Interpretable policy distillation: roll out a black-box teacher, build the
//! experience pool, fit students, and measure fidelity and reward.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_axis_tree, fit_knn, Impurity};
use crate::clustering::DistanceFn;
use crate::envs::Environment;
use crate::error::{BetError, Result};
use crate::pool::{ActionId, Experience, ExperiencePool, StateVector};
use crate::tree::{build, derive_seed, BetConfig, BetTree};

/// A deterministic state-to-action map. Teachers expose nothing else.
pub trait Policy {
    fn name(&self) -> &str;
    fn action_count(&self) -> usize;
    fn act(&self, s: &[f64]) -> ActionId;
}

impl Policy for BetTree {
    fn name(&self) -> &str {
        "bet"
    }

    fn action_count(&self) -> usize {
        self.action_count
    }

    fn act(&self, s: &[f64]) -> ActionId {
        self.predict_action(s)
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn action_count(&self) -> usize {
        (**self).action_count()
    }

    fn act(&self, s: &[f64]) -> ActionId {
        (**self).act(s)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn action_count(&self) -> usize {
        (**self).action_count()
    }

    fn act(&self, s: &[f64]) -> ActionId {
        (**self).act(s)
    }
}

/// Uniformly random actions; a sanity floor for reward comparisons.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    action_count: usize,
    rng: std::cell::RefCell<ChaCha8Rng>,
}

impl RandomPolicy {
    pub fn new(action_count: usize, seed: u64) -> Self {
        Self { action_count, rng: std::cell::RefCell::new(ChaCha8Rng::seed_from_u64(seed)) }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn action_count(&self) -> usize {
        self.action_count
    }

    fn act(&self, _s: &[f64]) -> ActionId {
        ActionId(self.rng.borrow_mut().random_range(0..self.action_count))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub seed: u64,
    pub length: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    pub pool: ExperiencePool,
    pub episodes: Vec<EpisodeRecord>,
}

/// Seed used for episode `episode` of a run seeded with `seed`.
pub fn episode_seed(seed: u64, episode: u64) -> u64 {
    derive_seed(seed, episode, 0x5EED)
}

/// Rolls out `teacher` for `episodes` episodes and records every `(s, pi(s))`.
pub fn collect_trajectories(
    env: &mut dyn Environment,
    teacher: &dyn Policy,
    episodes: usize,
    seed: u64,
) -> Result<Collection> {
    if episodes == 0 {
        return Err(BetError::Config("episodes must be >= 1".into()));
    }
    let mut experiences = Vec::new();
    let mut records = Vec::with_capacity(episodes);
    for m in 0..episodes as u64 {
        let ep_seed = episode_seed(seed, m);
        let mut state = env.reset(ep_seed);
        let mut reward = 0.0;
        let mut step = 0u64;
        loop {
            let action = teacher.act(&state);
            let out = env.step(action).map_err(|e| BetError::Env { episode: m, step, message: e.to_string() })?;
            experiences.push(Experience { state, action, episode: m, step });
            reward += out.reward;
            step += 1;
            state = out.state;
            if out.done {
                break;
            }
        }
        records.push(EpisodeRecord { episode: m, seed: ep_seed, length: step as usize, reward });
    }
    let pool = ExperiencePool::new(env.state_dim(), env.action_count(), experiences)?;
    Ok(Collection { pool, episodes: records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityResult {
    pub n_samples: usize,
    pub matches: usize,
    pub fidelity: f64,
    /// Agreement rate among states where the teacher chose each action;
    /// `None` for actions the teacher never chose.
    pub per_class_fidelity: Vec<Option<f64>>,
}

/// Fraction of `states` on which `student` and `teacher` agree.
pub fn evaluate_fidelity(student: &dyn Policy, teacher: &dyn Policy, states: &[StateVector]) -> Result<FidelityResult> {
    if states.is_empty() {
        return Err(BetError::Empty("held-out states".into()));
    }
    let c = teacher.action_count();
    let mut seen = vec![0usize; c];
    let mut hit = vec![0usize; c];
    for s in states {
        let t = teacher.act(s);
        seen[t.0] += 1;
        if student.act(s) == t {
            hit[t.0] += 1;
        }
    }
    let matches: usize = hit.iter().sum();
    Ok(FidelityResult {
        n_samples: states.len(),
        matches,
        fidelity: matches as f64 / states.len() as f64,
        per_class_fidelity: seen.iter().zip(&hit).map(|(&n, &h)| (n > 0).then(|| h as f64 / n as f64)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardResult {
    pub episodes: usize,
    pub mean_reward: f64,
    /// Population standard deviation.
    pub std_reward: f64,
    pub per_episode_rewards: Vec<f64>,
}

impl RewardResult {
    pub fn from_rewards(per_episode_rewards: Vec<f64>) -> Self {
        let n = per_episode_rewards.len() as f64;
        let mean = per_episode_rewards.iter().sum::<f64>() / n;
        let var = per_episode_rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        Self { episodes: per_episode_rewards.len(), mean_reward: mean, std_reward: var.sqrt(), per_episode_rewards }
    }
}

/// Runs `policy` for `episodes` episodes using the same episode seeds as
/// [`collect_trajectories`] with the same `seed`.
pub fn evaluate_reward(env: &mut dyn Environment, policy: &dyn Policy, episodes: usize, seed: u64) -> Result<RewardResult> {
    if episodes == 0 {
        return Err(BetError::Config("episodes must be >= 1".into()));
    }
    let mut rewards = Vec::with_capacity(episodes);
    for m in 0..episodes as u64 {
        let mut state = env.reset(episode_seed(seed, m));
        let mut total = 0.0;
        let mut step = 0u64;
        loop {
            let out = env
                .step(policy.act(&state))
                .map_err(|e| BetError::Env { episode: m, step, message: e.to_string() })?;
            total += out.reward;
            step += 1;
            state = out.state;
            if out.done {
                break;
            }
        }
        rewards.push(total);
    }
    Ok(RewardResult::from_rewards(rewards))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSplit {
    pub train_episodes: Vec<u64>,
    pub heldout_episodes: Vec<u64>,
}

/// Shuffles the pool's episode ids and assigns the first `train_fraction`
/// of them to training. Both sides keep at least one episode when possible.
pub fn split_episodes(pool: &ExperiencePool, train_fraction: f64, seed: u64) -> (ExperiencePool, ExperiencePool, EpisodeSplit) {
    let mut ids: Vec<u64> = pool.iter().map(|e| e.episode).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_train = (ids.len() as f64 * train_fraction).round() as usize;
    if ids.len() >= 2 {
        n_train = n_train.clamp(1, ids.len() - 1);
    }
    let mut train_episodes = ids[..n_train].to_vec();
    let mut heldout_episodes = ids[n_train..].to_vec();
    train_episodes.sort_unstable();
    heldout_episodes.sort_unstable();
    let train = pool.filter_episodes(|e| train_episodes.binary_search(&e).is_ok());
    let heldout = pool.filter_episodes(|e| heldout_episodes.binary_search(&e).is_ok());
    (train, heldout, EpisodeSplit { train_episodes, heldout_episodes })
}

/// `n` states drawn uniformly with replacement from `pool`.
pub fn sample_decisions(pool: &ExperiencePool, n: usize, seed: u64) -> Vec<StateVector> {
    if pool.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| pool.experiences()[rng.random_range(0..pool.len())].state.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub collection_episodes: usize,
    pub train_fraction: f64,
    pub heldout_decisions: usize,
    pub bet: BetConfig,
    pub cart_depth: usize,
    pub id3_depth: usize,
    pub knn_k: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            collection_episodes: 200,
            train_fraction: 0.8,
            heldout_decisions: 1000,
            bet: BetConfig::default(),
            cart_depth: 4,
            id3_depth: 4,
            knn_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentScore {
    pub student: String,
    pub fidelity: FidelityResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    pub split: EpisodeSplit,
    pub train_size: usize,
    pub scores: Vec<StudentScore>,
}

impl ProtocolRun {
    pub fn fidelity_of(&self, student: &str) -> Option<f64> {
        self.scores.iter().find(|s| s.student == student).map(|s| s.fidelity.fidelity)
    }
}

/// One distillation run: collect, split by episode, fit BET, CART, ID3 and
/// KNN on the training episodes, and score each on held-out decisions.
pub fn run_protocol(
    env: &mut dyn Environment,
    teacher: &dyn Policy,
    cfg: &ProtocolConfig,
    seed: u64,
) -> Result<ProtocolRun> {
    let collection = collect_trajectories(env, teacher, cfg.collection_episodes, seed)?;
    let (train, heldout, split) = split_episodes(&collection.pool, cfg.train_fraction, derive_seed(seed, 1, 1));
    let states = sample_decisions(&heldout, cfg.heldout_decisions, derive_seed(seed, 2, 2));

    let bet = build(&train, &BetConfig { seed, ..cfg.bet })?;
    let cart = fit_axis_tree(&train, Impurity::Gini, cfg.cart_depth, 2)?;
    let id3 = fit_axis_tree(&train, Impurity::Entropy, cfg.id3_depth, 2)?;
    let knn = fit_knn(&train, cfg.knn_k.min(train.len()), DistanceFn::Euclidean)?;
    let students: [&dyn Policy; 4] = [&bet, &cart, &id3, &knn];
    let mut scores = Vec::with_capacity(students.len());
    for s in students {
        scores.push(StudentScore { student: s.name().to_string(), fidelity: evaluate_fidelity(s, teacher, &states)? });
    }
    Ok(ProtocolRun { seed, episodes: collection.episodes, split, train_size: train.len(), scores })
}
