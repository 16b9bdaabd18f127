use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, StepOutcome};
use crate::error::{BetError, Result};
use crate::harness::Policy;
use crate::pool::{ActionId, StateVector};

/// Action names by id: up, down, left, right, stay. Rows grow downwards.
pub const GRID_ACTIONS: [&str; 5] = ["up", "down", "left", "right", "stay"];
const MOVES: [(i32, i32); 5] = [(-1, 0), (1, 0), (0, -1), (0, 1), (0, 0)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub size: i32,
    pub horizon: u32,
    pub step_penalty: f64,
    pub capture_reward: f64,
    /// The prey moves one column every `drift_period` steps, bouncing off walls.
    pub drift_period: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { size: 9, horizon: 50, step_penalty: -1.0, capture_reward: 10.0, drift_period: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    pub agent: (i32, i32),
    pub prey: (i32, i32),
    /// Horizontal drift direction of the prey, +1 or -1.
    pub prey_dir: i32,
    pub t: u32,
}

impl GridState {
    /// Observation: row and column offset from agent to prey.
    pub fn observe(&self) -> StateVector {
        StateVector::new(vec![
            (self.prey.0 - self.agent.0) as f64,
            (self.prey.1 - self.agent.1) as f64,
        ])
        .expect("integer offsets are finite")
    }
}

/// Pursuit on a square grid: the agent chases a prey that drifts
/// horizontally. Capture ends the episode with `capture_reward`; every other
/// step costs `step_penalty`; the episode is cut off at `horizon` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPursuit {
    pub config: GridConfig,
    pub state: GridState,
    done: bool,
}

impl GridPursuit {
    pub fn new(config: GridConfig) -> Self {
        let state = GridState { agent: (0, 0), prey: (config.size - 1, config.size - 1), prey_dir: 1, t: 0 };
        Self { config, state, done: false }
    }

    /// Seeded start: distinct uniform agent and prey cells and a random drift direction.
    pub fn start_state(&self, seed: u64) -> GridState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.config.size;
        let agent = (rng.random_range(0..n), rng.random_range(0..n));
        let prey = loop {
            let p = (rng.random_range(0..n), rng.random_range(0..n));
            if p != agent {
                break p;
            }
        };
        let prey_dir = if rng.random::<bool>() { 1 } else { -1 };
        GridState { agent, prey, prey_dir, t: 0 }
    }

    fn clamp(&self, (r, c): (i32, i32)) -> (i32, i32) {
        let hi = self.config.size - 1;
        (r.clamp(0, hi), c.clamp(0, hi))
    }

    fn drift(&self, s: &GridState) -> ((i32, i32), i32) {
        if !(s.t + 1).is_multiple_of(self.config.drift_period) {
            return (s.prey, s.prey_dir);
        }
        let mut dir = s.prey_dir;
        let next = s.prey.1 + dir;
        if next < 0 || next >= self.config.size {
            dir = -dir;
        }
        ((s.prey.0, s.prey.1 + dir), dir)
    }

    /// Pure transition function: `(next_state, reward, done)`.
    pub fn transition(&self, s: &GridState, action: ActionId) -> Result<(GridState, f64, bool)> {
        let (dr, dc) = *MOVES.get(action.0).ok_or(BetError::ActionOutOfRange {
            action: action.0,
            action_count: MOVES.len(),
        })?;
        let agent = self.clamp((s.agent.0 + dr, s.agent.1 + dc));
        let mut next = GridState { agent, t: s.t + 1, ..*s };
        if agent == s.prey {
            return Ok((next, self.config.capture_reward, true));
        }
        let (prey, prey_dir) = self.drift(s);
        next.prey = prey;
        next.prey_dir = prey_dir;
        if prey == agent {
            return Ok((next, self.config.capture_reward, true));
        }
        Ok((next, self.config.step_penalty, next.t >= self.config.horizon))
    }

    /// Best achievable return from `start`, by breadth-first search over agent
    /// cells against the (agent-independent) prey trajectory.
    pub fn optimal_return(&self, start: &GridState) -> f64 {
        let n = self.config.size as usize;
        let mut reach = vec![false; n * n];
        let idx = |(r, c): (i32, i32)| r as usize * n + c as usize;
        reach[idx(start.agent)] = true;
        let mut prey_state = *start;
        let mut ret = 0.0;
        for _ in 0..self.config.horizon {
            let mut next = vec![false; n * n];
            for r in 0..self.config.size {
                for c in 0..self.config.size {
                    if reach[idx((r, c))] {
                        for (dr, dc) in MOVES {
                            next[idx(self.clamp((r + dr, c + dc)))] = true;
                        }
                    }
                }
            }
            let (prey_next, dir) = self.drift(&prey_state);
            if next[idx(prey_state.prey)] || next[idx(prey_next)] {
                return ret + self.config.capture_reward;
            }
            ret += self.config.step_penalty;
            prey_state = GridState { prey: prey_next, prey_dir: dir, t: prey_state.t + 1, ..prey_state };
            reach = next;
        }
        ret
    }
}

impl Environment for GridPursuit {
    fn name(&self) -> &str {
        "gridpursuit"
    }

    fn action_count(&self) -> usize {
        MOVES.len()
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> StateVector {
        self.state = self.start_state(seed);
        self.done = false;
        self.state.observe()
    }

    fn step(&mut self, action: ActionId) -> Result<StepOutcome> {
        if self.done {
            return Err(BetError::Env {
                episode: 0,
                step: self.state.t as u64,
                message: "step called after episode end".into(),
            });
        }
        let (next, reward, done) = self.transition(&self.state, action)?;
        self.state = next;
        self.done = done;
        Ok(StepOutcome { state: next.observe(), reward, done })
    }
}

/// Greedy Manhattan pursuit: close the row gap first, then the column gap.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedTeacher;

impl Policy for ScriptedTeacher {
    fn name(&self) -> &str {
        "scripted"
    }

    fn action_count(&self) -> usize {
        MOVES.len()
    }

    fn act(&self, s: &[f64]) -> ActionId {
        let (dr, dc) = (s[0], s[1]);
        ActionId(if dr < 0.0 {
            0
        } else if dr > 0.0 {
            1
        } else if dc < 0.0 {
            2
        } else if dc > 0.0 {
            3
        } else {
            4
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> GridPursuit {
        GridPursuit::new(GridConfig::default())
    }

    fn state(agent: (i32, i32), prey: (i32, i32), t: u32) -> GridState {
        GridState { agent, prey, prey_dir: 1, t }
    }

    #[test]
    fn capture_adjacent_prey() {
        let (next, reward, done) = env().transition(&state((4, 4), (4, 5), 0), ActionId(3)).unwrap();
        assert_eq!(reward, 10.0);
        assert!(done);
        assert_eq!(next.agent, (4, 5));
    }

    #[test]
    fn stay_far_from_prey_costs_one() {
        let (_, reward, done) = env().transition(&state((0, 0), (8, 8), 0), ActionId(4)).unwrap();
        assert_eq!(reward, -1.0);
        assert!(!done);
    }

    #[test]
    fn horizon_ends_episode() {
        let e = env();
        let mut s = state((0, 0), (8, 4), 0);
        let mut steps = 0;
        loop {
            let (n, _, done) = e.transition(&s, ActionId(4)).unwrap();
            s = n;
            steps += 1;
            if done {
                break;
            }
        }
        assert_eq!(steps, 50);
    }

    #[test]
    fn invalid_action_rejected() {
        assert!(matches!(
            env().transition(&state((0, 0), (1, 1), 0), ActionId(5)),
            Err(BetError::ActionOutOfRange { action: 5, .. })
        ));
    }

    #[test]
    fn prey_bounces_off_walls() {
        let e = env();
        let s = GridState { agent: (0, 0), prey: (5, 8), prey_dir: 1, t: 1 };
        let (n, _, _) = e.transition(&s, ActionId(4)).unwrap();
        assert_eq!(n.prey, (5, 7));
        assert_eq!(n.prey_dir, -1);
    }

    #[test]
    fn moves_are_clamped_to_grid() {
        let (n, _, _) = env().transition(&state((0, 0), (8, 8), 0), ActionId(0)).unwrap();
        assert_eq!(n.agent, (0, 0));
    }

    #[test]
    fn teacher_captures_quickly_from_every_start() {
        let e = env();
        let n = e.config.size;
        for ar in 0..n {
            for ac in 0..n {
                for pr in 0..n {
                    for pc in 0..n {
                        if (ar, ac) == (pr, pc) {
                            continue;
                        }
                        for dir in [-1, 1] {
                            let mut s = GridState { agent: (ar, ac), prey: (pr, pc), prey_dir: dir, t: 0 };
                            let start = s;
                            let mut ret = 0.0;
                            let mut steps = 0;
                            loop {
                                let (next, r, done) = e.transition(&s, ScriptedTeacher.act(&s.observe())).unwrap();
                                ret += r;
                                steps += 1;
                                s = next;
                                if done {
                                    break;
                                }
                            }
                            assert!(steps <= 2 * n as u32, "{start:?} took {steps}");
                            assert_eq!(ret, e.optimal_return(&start), "{start:?}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reset_is_seeded() {
        let mut a = env();
        let mut b = env();
        assert_eq!(a.reset(42), b.reset(42));
        assert_eq!(a.state, b.state);
        assert_ne!(a.state.agent, a.state.prey);
    }

    #[test]
    fn step_after_done_is_an_error() {
        let mut e = env();
        e.state = state((4, 4), (4, 5), 0);
        assert!(e.step(ActionId(3)).unwrap().done);
        assert!(matches!(e.step(ActionId(3)), Err(BetError::Env { .. })));
    }
}
