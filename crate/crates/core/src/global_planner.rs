//! Global planning level.
//!
//! The global tree is rooted at the start configuration. Its candidate
//! targets are milestones: the goal plus batches of uniform free-space
//! samples. Every loop scores each untried (global node, milestone) pair,
//! runs a local search over the best one and either adds the milestone as a
//! new global node or records the pair's region as a local minimum.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, hvs, line_offset, Config, Polyline, Region};
use crate::local_planner::{local_search_with, CullRule, ExtendRule, LocalStatus};
use crate::world::{sample_free, CollisionOracle};

/// Tunable planner parameters. Every field has a default, so a JSON object
/// naming only some fields is a valid override.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SprintParams {
    /// Fixed local edge length.
    pub lambda: f64,
    /// Culling threshold on the node promise.
    pub kappa: f64,
    pub milestone_batch: usize,
    pub w1_g: f64,
    pub w2_g: f64,
    pub w1_l: f64,
    pub w2_l: f64,
    pub w3_l: f64,
    pub c_base: f64,
    pub sigma_slack: f64,
    pub n_scale: f64,
    /// Gradient ascent step; `None` means `lambda / 2`.
    pub eta: Option<f64>,
    pub ascent_iters: u32,
    pub r_retry: u32,
    pub k_obs: usize,
    /// Minimum improvement counted as progress; `None` means `lambda / 10`.
    pub eps_prog: Option<f64>,
    pub max_local_samples: u64,
    pub max_total_samples: u64,
    pub seed: u64,
}

impl Default for SprintParams {
    fn default() -> Self {
        SprintParams {
            lambda: 0.02,
            kappa: 0.3,
            milestone_batch: 50,
            w1_g: 1.0,
            w2_g: 1.0,
            w1_l: 1.0,
            w2_l: 1.0,
            w3_l: 1.0,
            c_base: 30.0,
            sigma_slack: 2.0,
            n_scale: 10.0,
            eta: None,
            ascent_iters: 2,
            r_retry: 3,
            k_obs: 10,
            eps_prog: None,
            max_local_samples: 2_000,
            max_total_samples: 200_000,
            seed: 0,
        }
    }
}

impl SprintParams {
    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(self.lambda / 2.0)
    }

    pub fn eps_prog(&self) -> f64 {
        self.eps_prog.unwrap_or(self.lambda / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("w1_g", self.w1_g),
            ("w2_g", self.w2_g),
            ("w1_l", self.w1_l),
            ("w2_l", self.w2_l),
            ("w3_l", self.w3_l),
            ("c_base", self.c_base),
            ("n_scale", self.n_scale),
            ("eta", self.eta()),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sigma_slack >= 0.0 && self.sigma_slack.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma_slack must be non-negative, got {}", self.sigma_slack)));
        }
        if !(self.eps_prog() >= 0.0 && self.eps_prog().is_finite()) {
            return Err(Error::InvalidParams(format!("eps_prog must be non-negative, got {}", self.eps_prog())));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::InvalidParams(format!("kappa must lie in (0, 1), got {}", self.kappa)));
        }
        if !(1..=2).contains(&self.ascent_iters) {
            return Err(Error::InvalidParams(format!("ascent_iters must be 1 or 2, got {}", self.ascent_iters)));
        }
        for (name, v) in [
            ("milestone_batch", self.milestone_batch as u64),
            ("r_retry", self.r_retry as u64),
            ("max_local_samples", self.max_local_samples),
            ("max_total_samples", self.max_total_samples),
        ] {
            if v == 0 {
                return Err(Error::InvalidParams(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// How the global level picks the next region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RegionRule {
    #[default]
    Heuristic,
    /// Uniformly random untried pair.
    Uniform,
}

/// Which decision rule each planning stage uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Heuristics {
    pub region: RegionRule,
    pub cull: CullRule,
    pub extend: ExtendRule,
}

#[derive(Clone, Debug)]
pub struct GlobalEdge {
    pub from: usize,
    pub to: usize,
    pub path: Polyline,
}

#[derive(Clone, Debug)]
pub struct GlobalTree {
    pub nodes: Vec<Config>,
    pub edges: Vec<GlobalEdge>,
    /// Index 0 is always the goal.
    pub milestones: Vec<Config>,
    pub attempted: HashSet<(usize, usize)>,
    local_min_regions: Vec<Region>,
    parent_edge: Vec<Option<usize>>,
    milestone_node: Vec<Option<usize>>,
    // local_min_clearance of each milestone, kept current as regions arrive
    clearance: Vec<f64>,
    spread: f64,
}

impl GlobalTree {
    pub fn new(q_init: Config, q_goal: Config) -> Self {
        let spread = dist(&q_init, &q_goal);
        GlobalTree {
            nodes: vec![q_init],
            edges: Vec::new(),
            milestones: vec![q_goal],
            attempted: HashSet::new(),
            local_min_regions: Vec::new(),
            parent_edge: vec![None],
            milestone_node: vec![None],
            clearance: vec![1.0],
            spread,
        }
    }

    pub fn root(&self) -> &Config {
        &self.nodes[0]
    }

    pub fn goal(&self) -> &Config {
        &self.milestones[0]
    }

    /// Global node a milestone turned into, if it has been reached.
    pub fn milestone_node(&self, m: usize) -> Option<usize> {
        self.milestone_node[m]
    }

    pub fn push_milestone(&mut self, q: Config) {
        self.clearance.push(local_min_clearance(&q, &self.local_min_regions, self.spread));
        self.milestones.push(q);
        self.milestone_node.push(None);
    }

    pub fn local_min_regions(&self) -> &[Region] {
        &self.local_min_regions
    }

    /// Records a region whose local search failed. A failed attempt at the
    /// goal does not count against the goal itself, so it stays a candidate
    /// for every later node.
    pub fn add_local_min(&mut self, region: Region) {
        let one = std::slice::from_ref(&region);
        for (m, q) in self.milestones.iter().enumerate() {
            if m == 0 && region.b == *q {
                continue;
            }
            self.clearance[m] = self.clearance[m].min(local_min_clearance(q, one, self.spread));
        }
        self.local_min_regions.push(region);
    }

    /// Cached [`local_min_clearance`] of milestone `m`, with the spread set
    /// to the start-goal distance.
    pub fn clearance(&self, m: usize) -> f64 {
        self.clearance[m]
    }

    /// Adds milestone `m` as a global node reached from `from` along `path`.
    pub fn connect(&mut self, from: usize, m: usize, path: Polyline) -> usize {
        let to = self.nodes.len();
        self.nodes.push(self.milestones[m].clone());
        self.edges.push(GlobalEdge { from, to, path });
        self.parent_edge.push(Some(self.edges.len() - 1));
        self.milestone_node[m] = Some(to);
        to
    }

    /// Untried (node, milestone) pairs, nodes outer, in insertion order.
    pub fn candidates(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.nodes.len()).flat_map(move |n| {
            (0..self.milestones.len())
                .filter(move |&m| self.milestone_node[m].is_none() && !self.attempted.contains(&(n, m)))
                .map(move |m| (n, m))
        })
    }
}

/// Detour term of the region score: zero when the milestone lies on the
/// segment from the node to the goal.
pub fn progress_shortfall(q_n: &Config, q_m: &Config, q_goal: &Config) -> f64 {
    (dist(q_m, q_goal) - (dist(q_n, q_goal) - dist(q_n, q_m))).max(0.0)
}

/// One minus the strongest penalty from any failed region whose ray (from
/// its first endpoint through its second) passes close to `q_m` at or beyond
/// the second endpoint.
pub fn local_min_clearance(q_m: &Config, regions: &[Region], c: f64) -> f64 {
    let mut worst = 0.0f64;
    for r in regions {
        let Ok((s, d)) = line_offset(q_m, r) else { continue };
        if hvs(s - 1.0) == 0.0 {
            continue;
        }
        worst = worst.max((-(d * d) / (2.0 * c * c)).exp());
    }
    1.0 - worst
}

/// Score of the region `R[q_n, q_m]` (up to the normalization constant).
pub fn region_score(q_n: &Config, q_m: &Config, q_goal: &Config, clearance: f64, c: f64, params: &SprintParams) -> f64 {
    let x1 = progress_shortfall(q_n, q_m, q_goal);
    let g1 = (-(x1 * x1) / (2.0 * c * c)).exp();
    (params.w1_g * g1) * (params.w2_g * clearance)
}

/// Highest-scoring untried pair. Ties go to the milestone nearer the goal,
/// then to the earlier pair.
pub fn select_region(tree: &GlobalTree, q_goal: &Config, params: &SprintParams) -> Result<(usize, usize)> {
    let c = dist(tree.root(), q_goal);
    let goal_dist: Vec<f64> = tree.milestones.iter().map(|m| dist(m, q_goal)).collect();
    let mut best: Option<((usize, usize), f64)> = None;
    for (n, m) in tree.candidates() {
        let score = region_score(&tree.nodes[n], &tree.milestones[m], q_goal, tree.clearance(m), c, params);
        let better = match best {
            None => true,
            Some(((_, bm), bs)) => score > bs || (score == bs && goal_dist[m] < goal_dist[bm]),
        };
        if better {
            best = Some(((n, m), score));
        }
    }
    best.map(|(pair, _)| pair).ok_or(Error::NoCandidates)
}

pub fn select_uniform<R: Rng + ?Sized>(tree: &GlobalTree, rng: &mut R) -> Result<(usize, usize)> {
    let all: Vec<_> = tree.candidates().collect();
    all.choose(rng).copied().ok_or(Error::NoCandidates)
}

pub fn add_milestones<R: Rng + ?Sized>(
    tree: &mut GlobalTree,
    oracle: &mut CollisionOracle<'_>,
    params: &SprintParams,
    rng: &mut R,
) -> Result<()> {
    for _ in 0..params.milestone_batch {
        let q = sample_free(oracle, rng)?;
        tree.push_milestone(q);
    }
    Ok(())
}

/// Concatenates edge paths from the root to the node at `q_goal`.
pub fn assemble_path(tree: &GlobalTree, q_goal: &Config) -> Result<Polyline> {
    let target = tree.nodes.iter().position(|n| n == q_goal).ok_or(Error::NotInTree)?;
    let mut chain = Vec::new();
    let mut cur = target;
    while let Some(e) = tree.parent_edge[cur] {
        chain.push(e);
        cur = tree.edges[e].from;
    }
    if chain.is_empty() {
        return Err(Error::NotInTree);
    }
    let mut points: Vec<Config> = Vec::new();
    for &e in chain.iter().rev() {
        for q in tree.edges[e].path.points() {
            if points.last() != Some(q) {
                points.push(q.clone());
            }
        }
    }
    Polyline::new(points)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanStatus {
    Solved,
    BudgetExhausted,
}

impl PlanStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanStatus::Solved => "solved",
            PlanStatus::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Clone, Debug)]
pub struct PlanResult {
    pub status: PlanStatus,
    pub path: Option<Polyline>,
    pub total_samples: u64,
    pub wall_time: f64,
    pub path_length: f64,
    /// Every tree edge the planner grew, for rendering.
    pub tree_edges: Vec<(Config, Config)>,
}

impl PlanResult {
    /// Everything except wall time, which is the one non-reproducible field.
    pub fn outcome_eq(&self, other: &PlanResult) -> bool {
        self.status == other.status
            && self.path == other.path
            && self.total_samples == other.total_samples
            && self.path_length.to_bits() == other.path_length.to_bits()
            && self.tree_edges == other.tree_edges
    }
}

pub fn plan<R: Rng + ?Sized>(
    q_init: &Config,
    q_goal: &Config,
    oracle: &mut CollisionOracle<'_>,
    params: &SprintParams,
    rng: &mut R,
) -> Result<PlanResult> {
    plan_with(q_init, q_goal, oracle, params, Heuristics::default(), rng)
}

pub fn plan_with<R: Rng + ?Sized>(
    q_init: &Config,
    q_goal: &Config,
    oracle: &mut CollisionOracle<'_>,
    params: &SprintParams,
    heuristics: Heuristics,
    rng: &mut R,
) -> Result<PlanResult> {
    params.validate()?;
    let clock = Instant::now();
    let start = oracle.sample_count();
    if q_init == q_goal {
        return Err(Error::InvalidParams("start and goal coincide".into()));
    }
    if !oracle.is_free(q_init) {
        return Err(Error::EndpointInCollision { which: "start" });
    }
    if !oracle.is_free(q_goal) {
        return Err(Error::EndpointInCollision { which: "goal" });
    }

    let mut tree = GlobalTree::new(q_init.clone(), q_goal.clone());
    let mut tree_edges = Vec::new();
    add_milestones(&mut tree, oracle, params, rng)?;

    let outcome = |status, path: Option<Polyline>, o: &CollisionOracle<'_>, edges| {
        let path_length = path.as_ref().map_or(0.0, Polyline::length);
        PlanResult {
            status,
            path,
            total_samples: o.sample_count() - start,
            wall_time: clock.elapsed().as_secs_f64(),
            path_length,
            tree_edges: edges,
        }
    };

    loop {
        let used = oracle.sample_count() - start;
        if used >= params.max_total_samples {
            return Ok(outcome(PlanStatus::BudgetExhausted, None, oracle, tree_edges));
        }
        let picked = match heuristics.region {
            RegionRule::Heuristic => select_region(&tree, q_goal, params),
            RegionRule::Uniform => select_uniform(&tree, rng),
        };
        let (n, m) = match picked {
            Ok(pair) => pair,
            Err(Error::NoCandidates) => {
                add_milestones(&mut tree, oracle, params, rng)?;
                continue;
            }
            Err(e) => return Err(e),
        };
        tree.attempted.insert((n, m));
        let budget = params.max_local_samples.min(params.max_total_samples - used);
        let root = tree.nodes[n].clone();
        let target = tree.milestones[m].clone();
        let result =
            local_search_with(&root, &target, oracle, params, heuristics.cull, heuristics.extend, budget, rng);
        tree_edges.extend(result.tree.edges().map(|(a, b)| (a.clone(), b.clone())));
        match (result.status, result.path) {
            (LocalStatus::Reached, Some(path)) => {
                tree.connect(n, m, path);
                if m == 0 {
                    let path = assemble_path(&tree, q_goal)?;
                    return Ok(outcome(PlanStatus::Solved, Some(path), oracle, tree_edges));
                }
            }
            _ => tree.add_local_min(Region::new(root, target)?),
        }
    }
}
