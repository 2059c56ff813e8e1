//! Scenes and the metered collision oracle.
//!
//! [`CollisionOracle::is_free`] is the only feasibility test in the crate, so
//! its counter is the authoritative collision-check sample count for any
//! planner run.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist_sq, Config};

/// Rejection attempts allowed per [`sample_free`] call.
pub const DEFAULT_REJECTION_BUDGET: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Obstacle {
    Box { min: Config, max: Config },
    Sphere { center: Config, radius: f64 },
}

impl Obstacle {
    pub fn dim(&self) -> usize {
        match self {
            Obstacle::Box { min, .. } => min.dim(),
            Obstacle::Sphere { center, .. } => center.dim(),
        }
    }

    /// Boundary points count as inside.
    pub fn contains(&self, q: &Config) -> bool {
        match self {
            Obstacle::Box { min, max } => q
                .coords()
                .iter()
                .zip(min.coords().iter().zip(max.coords()))
                .all(|(x, (lo, hi))| lo <= x && x <= hi),
            Obstacle::Sphere { center, radius } => dist_sq(q, center) <= radius * radius,
        }
    }
}

/// Axis-aligned bounded world with obstacles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub name: String,
    pub lower: Config,
    pub upper: Config,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    /// Default query endpoints used by the CLI and the harness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Config>,
}

impl Scene {
    pub fn new(name: impl Into<String>, lower: Config, upper: Config, obstacles: Vec<Obstacle>) -> Result<Self> {
        let scene = Scene { name: name.into(), lower, upper, obstacles, start: None, goal: None };
        scene.validate()?;
        Ok(scene)
    }

    pub fn with_query(mut self, start: Config, goal: Config) -> Result<Self> {
        self.start = Some(start);
        self.goal = Some(goal);
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.lower.dim()
    }

    /// Checks every structural invariant, reporting the offending field.
    pub fn validate(&self) -> Result<()> {
        let invalid = |field: String, message: String| Err(Error::InvalidScene { field, message });
        let d = self.lower.dim();
        if self.upper.dim() != d {
            return invalid("upper".into(), format!("expected {d} coordinates, got {}", self.upper.dim()));
        }
        for (i, (lo, hi)) in self.lower.coords().iter().zip(self.upper.coords()).enumerate() {
            if lo.partial_cmp(hi) != Some(std::cmp::Ordering::Less) {
                return invalid(format!("lower[{i}]"), format!("must be below upper[{i}] ({lo} >= {hi})"));
            }
        }
        for (k, obs) in self.obstacles.iter().enumerate() {
            match obs {
                Obstacle::Box { min, max } => {
                    if min.dim() != d {
                        return invalid(format!("obstacles[{k}].min"), format!("expected {d} coordinates, got {}", min.dim()));
                    }
                    if max.dim() != d {
                        return invalid(format!("obstacles[{k}].max"), format!("expected {d} coordinates, got {}", max.dim()));
                    }
                    for (i, (lo, hi)) in min.coords().iter().zip(max.coords()).enumerate() {
                        if lo > hi {
                            return invalid(format!("obstacles[{k}].min[{i}]"), format!("exceeds max ({lo} > {hi})"));
                        }
                    }
                }
                Obstacle::Sphere { center, radius } => {
                    if center.dim() != d {
                        return invalid(format!("obstacles[{k}].center"), format!("expected {d} coordinates, got {}", center.dim()));
                    }
                    if !(*radius > 0.0 && radius.is_finite()) {
                        return invalid(format!("obstacles[{k}].radius"), format!("must be positive, got {radius}"));
                    }
                }
            }
        }
        for (field, q) in [("start", &self.start), ("goal", &self.goal)] {
            if let Some(q) = q {
                if q.dim() != d {
                    return invalid(field.into(), format!("expected {d} coordinates, got {}", q.dim()));
                }
            }
        }
        Ok(())
    }

    fn in_bounds(&self, q: &Config) -> bool {
        q.coords()
            .iter()
            .zip(self.lower.coords().iter().zip(self.upper.coords()))
            .all(|(x, (lo, hi))| lo <= x && x <= hi)
    }

    /// Uniform draw from the bounding box. Does not touch any oracle.
    pub fn sample_bounds<R: Rng + ?Sized>(&self, rng: &mut R) -> Config {
        Config::new(
            self.lower
                .coords()
                .iter()
                .zip(self.upper.coords())
                .map(|(lo, hi)| rng.random_range(*lo..*hi))
                .collect(),
        )
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenes always serialize")
    }

    /// Looks up one of the fixtures shipped with the crate.
    pub fn builtin(name: &str) -> Option<Scene> {
        let text = BUILTIN_SCENES.iter().find(|(n, _)| *n == name)?.1;
        let scene = Scene::from_json(text).expect("builtin scene parses");
        scene.validate().expect("builtin scene is valid");
        Some(scene)
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN_SCENES.iter().map(|(n, _)| *n)
    }
}

const BUILTIN_SCENES: &[(&str, &str)] = &[
    ("empty_2d", include_str!("../scenes/empty_2d.json")),
    ("single_box_2d", include_str!("../scenes/single_box_2d.json")),
    ("narrow_passage_2d", include_str!("../scenes/narrow_passage_2d.json")),
    ("vertical_bars_2d", include_str!("../scenes/vertical_bars_2d.json")),
    ("narrow_passage_6d", include_str!("../scenes/narrow_passage_6d.json")),
    ("box_maze_10d", include_str!("../scenes/box_maze_10d.json")),
];

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
    let scene = Scene::from_json(&text).map_err(|source| Error::Json { path: path.into(), source })?;
    scene.validate()?;
    Ok(scene)
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, scene.to_json()).map_err(|source| Error::Io { path: path.into(), source })
}

/// Resolves a builtin fixture name, falling back to a file path.
pub fn resolve_scene(name_or_path: &str) -> Result<Scene> {
    match Scene::builtin(name_or_path) {
        Some(scene) => Ok(scene),
        None => load_scene(name_or_path),
    }
}

/// Feasibility queries against a scene, with a monotone query counter.
///
/// When recording is enabled every query is kept together with its verdict,
/// which is what the usefulness metric and the SVG renderer consume.
#[derive(Debug)]
pub struct CollisionOracle<'a> {
    scene: &'a Scene,
    sample_count: u64,
    log: Option<Vec<(Config, bool)>>,
}

impl<'a> CollisionOracle<'a> {
    pub fn new(scene: &'a Scene) -> Self {
        CollisionOracle { scene, sample_count: 0, log: None }
    }

    pub fn recording(scene: &'a Scene) -> Self {
        CollisionOracle { scene, sample_count: 0, log: Some(Vec::new()) }
    }

    pub fn scene(&self) -> &'a Scene {
        self.scene
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn samples(&self) -> Option<&[(Config, bool)]> {
        self.log.as_deref()
    }

    pub fn take_samples(&mut self) -> Option<Vec<(Config, bool)>> {
        self.log.take()
    }

    /// True iff `q` lies inside the bounds and outside every obstacle.
    /// Panics on dimension mismatch.
    pub fn is_free(&mut self, q: &Config) -> bool {
        assert_eq!(q.dim(), self.scene.dim(), "configuration dimension mismatch");
        self.sample_count += 1;
        let free = self.scene.in_bounds(q) && !self.scene.obstacles.iter().any(|o| o.contains(q));
        if let Some(log) = &mut self.log {
            log.push((q.clone(), free));
        }
        free
    }
}

/// Rejection-samples a uniform free configuration. Every attempt is metered.
pub fn sample_free<R: Rng + ?Sized>(oracle: &mut CollisionOracle<'_>, rng: &mut R) -> Result<Config> {
    sample_free_with_budget(oracle, rng, DEFAULT_REJECTION_BUDGET)
}

pub fn sample_free_with_budget<R: Rng + ?Sized>(
    oracle: &mut CollisionOracle<'_>,
    rng: &mut R,
    budget: u64,
) -> Result<Config> {
    let scene = oracle.scene();
    for _ in 0..budget {
        let q = scene.sample_bounds(rng);
        if oracle.is_free(&q) {
            return Ok(q);
        }
    }
    Err(Error::FreeSpaceNotFound { attempts: budget })
}
