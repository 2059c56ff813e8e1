//! RRT and RRT-Connect, metered through the same collision oracle as the
//! main planner.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, Config, Polyline};
use crate::global_planner::{PlanResult, PlanStatus};
use crate::world::CollisionOracle;

#[derive(Clone, Debug)]
struct KdNode {
    id: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Incremental kd-tree with exact nearest-neighbour queries.
#[derive(Clone, Debug, Default)]
pub struct KdTree {
    dim: usize,
    coords: Vec<f64>,
    nodes: Vec<KdNode>,
}

impl KdTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn point(&self, idx: usize) -> &[f64] {
        &self.coords[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn insert(&mut self, point: Config, id: usize) {
        let new = self.nodes.len();
        let p = point.coords();
        if new == 0 {
            self.dim = p.len();
            self.coords.extend_from_slice(p);
            self.nodes.push(KdNode { id, axis: 0, left: None, right: None });
            return;
        }
        assert_eq!(p.len(), self.dim, "configuration dimension mismatch");
        let mut cur = 0;
        loop {
            let axis = self.nodes[cur].axis;
            let go_left = p[axis] < self.point(cur)[axis];
            let node = &mut self.nodes[cur];
            let next = if go_left { &mut node.left } else { &mut node.right };
            match *next {
                Some(n) => cur = n,
                None => {
                    *next = Some(new);
                    self.coords.extend_from_slice(p);
                    self.nodes.push(KdNode { id, axis: (axis + 1) % self.dim, left: None, right: None });
                    return;
                }
            }
        }
    }

    /// Id of the nearest stored point; equidistant points resolve to the
    /// lowest id.
    pub fn nearest(&self, q: &Config) -> Result<usize> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyInput("kd-tree"));
        }
        assert_eq!(q.dim(), self.dim, "configuration dimension mismatch");
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(0, q.coords(), &mut best);
        Ok(best.1)
    }

    fn search(&self, idx: usize, q: &[f64], best: &mut (f64, usize)) {
        let node = &self.nodes[idx];
        let p = self.point(idx);
        // Partial sums of squares only grow, so stopping once past the best is exact.
        let mut d = 0.0;
        for (x, y) in p.iter().zip(q) {
            d += (x - y) * (x - y);
            if d > best.0 {
                break;
            }
        }
        if d < best.0 || (d == best.0 && node.id < best.1) {
            *best = (d, node.id);
        }
        let diff = q[node.axis] - p[node.axis];
        let (near, far) = if diff < 0.0 { (node.left, node.right) } else { (node.right, node.left) };
        if let Some(n) = near {
            self.search(n, q, best);
        }
        if let Some(f) = far {
            if diff * diff <= best.0 {
                self.search(f, q, best);
            }
        }
    }
}

pub fn kd_nearest(tree: &KdTree, q: &Config) -> Result<usize> {
    tree.nearest(q)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub step: f64,
    pub goal_bias: f64,
    pub max_samples: u64,
    pub seed: u64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams { step: 0.02, goal_bias: 0.05, max_samples: 200_000, seed: 0 }
    }
}

impl BaselineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidParams(format!("step must be positive, got {}", self.step)));
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(Error::InvalidParams(format!("goal_bias must lie in [0, 1], got {}", self.goal_bias)));
        }
        if self.max_samples == 0 {
            return Err(Error::InvalidParams("max_samples must be positive".into()));
        }
        Ok(())
    }
}

/// A growing tree of free configurations with parent links.
struct Tree {
    configs: Vec<Config>,
    parents: Vec<Option<usize>>,
    index: KdTree,
}

impl Tree {
    fn new(root: Config) -> Self {
        let mut index = KdTree::new();
        index.insert(root.clone(), 0);
        Tree { configs: vec![root], parents: vec![None], index }
    }

    fn add(&mut self, q: Config, parent: usize) -> usize {
        let id = self.configs.len();
        self.index.insert(q.clone(), id);
        self.configs.push(q);
        self.parents.push(Some(parent));
        id
    }

    fn nearest(&self, q: &Config) -> usize {
        self.index.nearest(q).expect("tree is never empty")
    }

    /// Configurations from the root down to `id`.
    fn branch(&self, id: usize) -> Vec<Config> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(i) = cur {
            out.push(self.configs[i].clone());
            cur = self.parents[i];
        }
        out.reverse();
        out
    }

    fn edges(&self) -> impl Iterator<Item = (Config, Config)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|p| (self.configs[p].clone(), self.configs[i].clone())))
    }
}

/// Point one step from `from` toward `to`, or `to` itself when closer.
fn steer(from: &Config, to: &Config, step: f64) -> Config {
    let d = dist(from, to);
    if d <= step {
        to.clone()
    } else {
        from.add_scaled(&(to - from), step / d)
    }
}

fn check_endpoints(q_init: &Config, q_goal: &Config, oracle: &mut CollisionOracle<'_>) -> Result<()> {
    if q_init == q_goal {
        return Err(Error::InvalidParams("start and goal coincide".into()));
    }
    if !oracle.is_free(q_init) {
        return Err(Error::EndpointInCollision { which: "start" });
    }
    if !oracle.is_free(q_goal) {
        return Err(Error::EndpointInCollision { which: "goal" });
    }
    Ok(())
}

fn finish(status: PlanStatus, points: Option<Vec<Config>>, samples: u64, clock: Instant, edges: Vec<(Config, Config)>) -> Result<PlanResult> {
    let path = points.map(Polyline::new).transpose()?;
    Ok(PlanResult {
        status,
        path_length: path.as_ref().map_or(0.0, Polyline::length),
        path,
        total_samples: samples,
        wall_time: clock.elapsed().as_secs_f64(),
        tree_edges: edges,
    })
}

pub fn rrt_plan<R: Rng + ?Sized>(
    q_init: &Config,
    q_goal: &Config,
    oracle: &mut CollisionOracle<'_>,
    params: &BaselineParams,
    rng: &mut R,
) -> Result<PlanResult> {
    params.validate()?;
    let clock = Instant::now();
    let start = oracle.sample_count();
    check_endpoints(q_init, q_goal, oracle)?;
    let scene = oracle.scene();
    let mut tree = Tree::new(q_init.clone());
    loop {
        if oracle.sample_count() - start >= params.max_samples {
            let edges = tree.edges().collect();
            return finish(PlanStatus::BudgetExhausted, None, oracle.sample_count() - start, clock, edges);
        }
        let target = if rng.random_bool(params.goal_bias) { q_goal.clone() } else { scene.sample_bounds(rng) };
        let near = tree.nearest(&target);
        if tree.configs[near] == target {
            continue;
        }
        let q_new = steer(&tree.configs[near], &target, params.step);
        if !oracle.is_free(&q_new) {
            continue;
        }
        let id = tree.add(q_new, near);
        if tree.configs[id] == *q_goal {
            let edges = tree.edges().collect();
            return finish(PlanStatus::Solved, Some(tree.branch(id)), oracle.sample_count() - start, clock, edges);
        }
        if dist(&tree.configs[id], q_goal) <= params.step && oracle.is_free(q_goal) {
            let goal = tree.add(q_goal.clone(), id);
            let edges = tree.edges().collect();
            return finish(PlanStatus::Solved, Some(tree.branch(goal)), oracle.sample_count() - start, clock, edges);
        }
    }
}

pub fn rrt_connect_plan<R: Rng + ?Sized>(
    q_init: &Config,
    q_goal: &Config,
    oracle: &mut CollisionOracle<'_>,
    params: &BaselineParams,
    rng: &mut R,
) -> Result<PlanResult> {
    params.validate()?;
    let clock = Instant::now();
    let start = oracle.sample_count();
    check_endpoints(q_init, q_goal, oracle)?;
    let scene = oracle.scene();
    let budget = params.max_samples;
    let mut trees = [Tree::new(q_init.clone()), Tree::new(q_goal.clone())];
    let mut a = 0;

    let used = |o: &CollisionOracle<'_>| o.sample_count() - start;
    let all_edges = |t: &[Tree; 2]| t.iter().flat_map(Tree::edges).collect::<Vec<_>>();

    loop {
        if used(oracle) >= budget {
            return finish(PlanStatus::BudgetExhausted, None, used(oracle), clock, all_edges(&trees));
        }
        let target = scene.sample_bounds(rng);
        let near = trees[a].nearest(&target);
        let q_new = steer(&trees[a].configs[near], &target, params.step);
        if q_new != trees[a].configs[near] && oracle.is_free(&q_new) {
            let new_a = trees[a].add(q_new.clone(), near);
            let b = 1 - a;
            let mut cur = trees[b].nearest(&q_new);
            let connected = loop {
                if used(oracle) >= budget {
                    break None;
                }
                let q = steer(&trees[b].configs[cur], &q_new, params.step);
                if !oracle.is_free(&q) {
                    break None;
                }
                let reached = q == q_new;
                cur = trees[b].add(q, cur);
                if reached {
                    break Some(cur);
                }
            };
            if let Some(new_b) = connected {
                let (from_start, from_goal) = if a == 0 { (new_a, new_b) } else { (new_b, new_a) };
                let mut points = trees[0].branch(from_start);
                let mut tail = trees[1].branch(from_goal);
                tail.reverse();
                // both branches end at the shared configuration
                points.extend(tail.into_iter().skip(1));
                return finish(PlanStatus::Solved, Some(points), used(oracle), clock, all_edges(&trees));
            }
        }
        a = 1 - a;
    }
}
