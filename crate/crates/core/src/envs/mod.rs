//! Desk-scale data sources: the 3-class Moons dataset and the GridPursuit
//! control task with its scripted teacher.

mod gridpursuit;
mod moons;

pub use gridpursuit::{GridConfig, GridPursuit, GridState, ScriptedTeacher, GRID_ACTIONS};
pub use moons::{generate_moons3, MoonsDataset};

use crate::error::Result;
use crate::pool::{ActionId, StateVector};

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: StateVector,
    pub reward: f64,
    pub done: bool,
}

/// An episodic environment with a discrete action set.
pub trait Environment {
    fn name(&self) -> &str;
    fn action_count(&self) -> usize;
    fn state_dim(&self) -> usize;
    /// Starts a new episode; the start state is a function of `seed` alone.
    fn reset(&mut self, seed: u64) -> StateVector;
    fn step(&mut self, action: ActionId) -> Result<StepOutcome>;
}

/// Names accepted by [`make_env`].
pub const ENV_NAMES: &[&str] = &["gridpursuit"];

pub fn make_env(name: &str) -> Option<Box<dyn Environment>> {
    match name {
        "gridpursuit" => Some(Box::new(GridPursuit::new(GridConfig::default()))),
        _ => None,
    }
}
