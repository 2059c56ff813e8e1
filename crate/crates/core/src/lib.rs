//! Sampling-based motion planning with a two-level search, plus RRT and
//! RRT-Connect baselines and a benchmark harness.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod geometry;
pub mod global_planner;
pub mod local_planner;
pub mod world;

pub use error::{Error, Result};
pub use geometry::{Config, Polyline, Region};
pub use global_planner::{plan, plan_with, Heuristics, PlanResult, PlanStatus, RegionRule, SprintParams};
pub use local_planner::{CullRule, ExtendRule};
pub use world::{CollisionOracle, Obstacle, Scene};
