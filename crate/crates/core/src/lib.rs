//! Backbone Extract Tree (BET): a transparent student model built from
//! per-class cluster centroids ("Bones"), plus the distillation harness,
//! environments, and baseline students used to evaluate it.

pub mod baselines;
pub mod clustering;
pub mod envs;
pub mod error;
pub mod explain;
pub mod harness;
pub mod inference;
pub mod io;
pub mod model_io;
pub mod pool;
pub mod tree;

pub use clustering::{Bone, ClusteringResult, DistanceFn, LloydOptions};
pub use error::{BetError, Result};
pub use harness::Policy;
pub use inference::{NodePosterior, PosteriorReport};
pub use pool::{build_pool, split_by_class, ActionId, ClassSubset, Experience, ExperiencePool, StateVector};
pub use tree::{build, BetConfig, BetTree, Node, SigmaMode};
