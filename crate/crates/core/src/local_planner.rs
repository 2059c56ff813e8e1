//! Local planning level: a greedy depth-first tree search between a global
//! node and a milestone.
//!
//! Nodes are extended by a fixed step `λ`. The root and every node with two
//! or more children are *checkpoints*; each checkpoint holds a
//! [`CheckpointRecord`] that collects progress counters, node counts and
//! recent collision points from its whole subtree. Two decisions read those
//! records:
//!
//! * [`valid_node`] culls a node when some checkpoint above it has gone too
//!   many samples without exploitation or exploration progress.
//! * [`local_edge`] steers the next edge by gradient ascent on a straight-line
//!   term, a goal-attraction term and a repulsion term built from the
//!   collision points stored at the nearest checkpoint.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{dist, hvs, proj, proj_scalar, Config, Polyline, Region};
use crate::global_planner::SprintParams;
use crate::world::CollisionOracle;

pub type NodeId = usize;

/// Slack used when testing whether a node lies within one step of the goal.
pub const GOAL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct LocalNode {
    pub id: NodeId,
    pub config: Config,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub is_checkpoint: bool,
}

impl LocalNode {
    pub fn child_count(&self) -> usize {
        self.children.len()
    }
}

/// Subtree statistics stored at a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointRecord {
    /// Samples since the subtree last got closer to the goal.
    pub samples_since_exploit: u64,
    /// Samples since the subtree last reached further from the root.
    pub samples_since_explore: u64,
    pub subtree_node_count: u64,
    /// Most recent collision points, oldest first.
    pub obs_points: Vec<Config>,
    pub best_goal_dist: f64,
    pub max_root_dist: f64,
}

impl CheckpointRecord {
    pub fn stall_count(&self) -> u64 {
        self.samples_since_exploit.min(self.samples_since_explore)
    }
}

#[derive(Clone, Debug)]
pub struct LocalTree {
    nodes: Vec<LocalNode>,
    records: Vec<Option<CheckpointRecord>>,
    // nearest checkpoint at or above each node
    anchor: Vec<NodeId>,
    // for checkpoints: nearest checkpoint strictly above
    up: Vec<Option<NodeId>>,
    root: Config,
    goal: Config,
    stack: Vec<(NodeId, u32)>,
    step: f64,
    k_obs: usize,
    eps_prog: f64,
}

impl LocalTree {
    pub fn new(root: Config, goal: Config, step: f64, k_obs: usize, eps_prog: f64) -> Self {
        assert_eq!(root.dim(), goal.dim(), "configuration dimension mismatch");
        assert!(step > 0.0, "step must be positive");
        let record = CheckpointRecord {
            samples_since_exploit: 0,
            samples_since_explore: 0,
            subtree_node_count: 1,
            obs_points: Vec::new(),
            best_goal_dist: dist(&root, &goal),
            max_root_dist: 0.0,
        };
        LocalTree {
            nodes: vec![LocalNode { id: 0, config: root.clone(), parent: None, children: Vec::new(), is_checkpoint: true }],
            records: vec![Some(record)],
            anchor: vec![0],
            up: vec![None],
            root,
            goal,
            stack: Vec::new(),
            step,
            k_obs,
            eps_prog,
        }
    }

    pub fn from_params(root: Config, goal: Config, params: &SprintParams) -> Self {
        LocalTree::new(root, goal, params.lambda, params.k_obs, params.eps_prog())
    }

    pub const ROOT: NodeId = 0;

    pub fn root(&self) -> &Config {
        &self.root
    }

    pub fn goal(&self) -> &Config {
        &self.goal
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &LocalNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[LocalNode] {
        &self.nodes
    }

    pub fn record(&self, id: NodeId) -> Option<&CheckpointRecord> {
        self.records[id].as_ref()
    }

    pub fn checkpoints(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| n.is_checkpoint).map(|n| n.id)
    }

    /// Checkpoints on the path from `id` to the root, nearest first.
    pub fn checkpoint_path(&self, id: NodeId) -> CheckpointPath<'_> {
        CheckpointPath { tree: self, next: Some(self.anchor[id]) }
    }

    /// Configurations from the root down to `id`.
    pub fn path_to(&self, id: NodeId) -> Vec<Config> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(n) = cur {
            out.push(self.nodes[n].config.clone());
            cur = self.nodes[n].parent;
        }
        out.reverse();
        out
    }

    pub fn edges(&self) -> impl Iterator<Item = (&Config, &Config)> + '_ {
        self.nodes
            .iter()
            .filter_map(|n| n.parent.map(|p| (&self.nodes[p].config, &n.config)))
    }

    /// Attaches a new leaf below `parent`. A parent gaining its second child
    /// is promoted to a checkpoint before the leaf is attached, so the leaf
    /// itself still has to be accounted with [`LocalTree::backprop_progress`].
    pub fn insert(&mut self, parent: NodeId, config: Config) -> NodeId {
        if self.nodes[parent].child_count() == 1 && !self.nodes[parent].is_checkpoint {
            self.promote_checkpoint(parent);
        }
        let id = self.nodes.len();
        self.nodes.push(LocalNode { id, config, parent: Some(parent), children: Vec::new(), is_checkpoint: false });
        self.nodes[parent].children.push(id);
        self.records.push(None);
        self.anchor.push(self.anchor[parent]);
        self.up.push(None);
        id
    }

    /// Turns `id` into a checkpoint whose record summarizes its current
    /// subtree. Counters start at zero and no collision points are
    /// re-attributed. Only the single-child chain below `id` is walked;
    /// deeper checkpoints contribute their own records.
    pub fn promote_checkpoint(&mut self, id: NodeId) {
        if self.nodes[id].is_checkpoint {
            return;
        }
        let previous = self.anchor[id];
        let mut count = 0u64;
        let mut best_goal = f64::INFINITY;
        let mut max_root = 0.0f64;
        let mut pending = vec![id];
        while let Some(n) = pending.pop() {
            if n != id && self.nodes[n].is_checkpoint {
                let rec = self.records[n].as_ref().expect("checkpoint has a record");
                count += rec.subtree_node_count;
                best_goal = best_goal.min(rec.best_goal_dist);
                max_root = max_root.max(rec.max_root_dist);
                self.up[n] = Some(id);
                continue;
            }
            count += 1;
            best_goal = best_goal.min(dist(&self.nodes[n].config, &self.goal));
            max_root = max_root.max(dist(&self.nodes[n].config, &self.root));
            self.anchor[n] = id;
            pending.extend(self.nodes[n].children.iter().copied());
        }
        self.nodes[id].is_checkpoint = true;
        self.up[id] = Some(previous);
        self.records[id] = Some(CheckpointRecord {
            samples_since_exploit: 0,
            samples_since_explore: 0,
            subtree_node_count: count,
            obs_points: Vec::new(),
            best_goal_dist: best_goal,
            max_root_dist: max_root,
        });
    }

    pub fn backprop_progress(&mut self, new_node: NodeId) {
        let q = &self.nodes[new_node].config;
        let goal_dist = dist(q, &self.goal);
        let root_dist = dist(q, &self.root);
        let mut cur = Some(self.anchor[new_node]);
        while let Some(cp) = cur {
            let rec = self.records[cp].as_mut().expect("checkpoint has a record");
            rec.subtree_node_count += 1;
            if goal_dist < rec.best_goal_dist - self.eps_prog {
                rec.best_goal_dist = goal_dist;
                rec.samples_since_exploit = 0;
            } else {
                rec.samples_since_exploit += 1;
            }
            if root_dist > rec.max_root_dist + self.eps_prog {
                rec.max_root_dist = root_dist;
                rec.samples_since_explore = 0;
            } else {
                rec.samples_since_explore += 1;
            }
            cur = self.up[cp];
        }
    }

    pub fn backprop_collision(&mut self, from: NodeId, q_obs: &Config) {
        let mut cur = Some(self.anchor[from]);
        while let Some(cp) = cur {
            let rec = self.records[cp].as_mut().expect("checkpoint has a record");
            if rec.obs_points.len() == self.k_obs {
                rec.obs_points.remove(0);
            }
            if self.k_obs > 0 {
                rec.obs_points.push(q_obs.clone());
            }
            rec.samples_since_exploit += 1;
            rec.samples_since_explore += 1;
            cur = self.up[cp];
        }
    }

    /// Collision points stored at the nearest checkpoint at or above `id`.
    pub fn collision_points(&self, id: NodeId) -> &[Config] {
        &self.records[self.anchor[id]].as_ref().expect("anchor is a checkpoint").obs_points
    }
}

#[derive(Debug)]
pub struct CheckpointPath<'a> {
    tree: &'a LocalTree,
    next: Option<NodeId>,
}

impl Iterator for CheckpointPath<'_> {
    type Item = NodeId;
    fn next(&mut self) -> Option<NodeId> {
        let cur = self.next?;
        self.next = self.tree.up[cur];
        Some(cur)
    }
}

pub fn collision_points(id: NodeId, tree: &LocalTree) -> &[Config] {
    tree.collision_points(id)
}

/// Standard deviation of the culling Gaussian for a subtree of `n` nodes.
pub fn subtree_sigma(n: u64, params: &SprintParams) -> f64 {
    params.c_base * (1.0 + params.sigma_slack * (-(n as f64) / params.n_scale).exp())
}

/// Smallest Gaussian score over the checkpoints above `id`.
pub fn node_promise(id: NodeId, tree: &LocalTree, params: &SprintParams) -> f64 {
    tree.checkpoint_path(id)
        .map(|cp| {
            let rec = tree.record(cp).expect("checkpoint has a record");
            let x = rec.stall_count() as f64;
            let c = subtree_sigma(rec.subtree_node_count, params);
            (-(x * x) / (2.0 * c * c)).exp()
        })
        .fold(1.0, f64::min)
}

pub fn valid_node(id: NodeId, tree: &LocalTree, params: &SprintParams) -> bool {
    node_promise(id, tree, params) >= params.kappa
}

/// Straight-line term: the unit direction of the predecessor edge.
pub fn grad_g1(q_x: &Config, q_p: &Config) -> Result<Config> {
    (q_x - q_p).normalized().ok_or(Error::DegenerateDirection)
}

/// Goal term. Its magnitude rises from 1 far away to 2 at the goal; at the
/// goal itself the gradient is zero.
pub fn grad_g2(q_c: &Config, goal: &Config, lambda: f64) -> Config {
    let to_goal = goal - q_c;
    let d = to_goal.norm();
    if d == 0.0 {
        return Config::zeros(q_c.dim());
    }
    &to_goal * (psi2(d, lambda) / d)
}

pub fn psi2(goal_dist: f64, lambda: f64) -> f64 {
    (-(goal_dist * goal_dist) / (4.0 * lambda * lambda)).exp() + 1.0
}

pub fn psi32(offset: f64, lambda: f64) -> f64 {
    5.0 * (-(offset * offset) / (4.0 * lambda * lambda)).exp()
}

/// Repulsion term: the mean push of every collision point away from its
/// projection onto the candidate edge `[q_x, q_c]`. Points projecting
/// behind `q_x` contribute nothing. A point lying exactly on the edge line
/// pushes along a random direction.
pub fn grad_g3<R: Rng + ?Sized>(
    q_x: &Config,
    q_c: &Config,
    obs: &[Config],
    lambda: f64,
    rng: &mut R,
) -> Result<Config> {
    if obs.is_empty() {
        return Err(Error::EmptyInput("collision points"));
    }
    let region = Region::new(q_x.clone(), q_c.clone())?;
    let mut total = Config::zeros(q_x.dim());
    for q_obs in obs {
        let t = proj_scalar(q_obs, &region)?;
        let gate = hvs(t);
        if gate == 0.0 {
            continue;
        }
        let foot = proj(q_obs, &region)?;
        let away = &foot - q_obs;
        let offset = away.norm();
        let dir = match away.normalized() {
            Some(u) => u,
            None => Config::random_unit(q_x.dim(), rng),
        };
        total = total.add_scaled(&dir, gate * psi32(offset, lambda));
    }
    Ok(&total * (1.0 / obs.len() as f64))
}

fn predecessor(id: NodeId, tree: &LocalTree) -> Config {
    let node = tree.node(id);
    match node.parent {
        Some(p) => tree.node(p).config.clone(),
        None => {
            // virtual predecessor one step behind, opposite the goal
            let back = (tree.goal() - &node.config)
                .normalized()
                .unwrap_or_else(|| Config::zeros(node.config.dim()));
            node.config.add_scaled(&back, -tree.step())
        }
    }
}

fn clamp_length(q_x: &Config, q_c: &Config, lambda: f64, rng: &mut (impl Rng + ?Sized)) -> Config {
    let dir = (q_c - q_x).normalized().unwrap_or_else(|| Config::random_unit(q_x.dim(), rng));
    q_x.add_scaled(&dir, lambda)
}

/// Candidate endpoint for the next edge out of `id`, always exactly one step
/// away from it.
pub fn local_edge<R: Rng + ?Sized>(
    id: NodeId,
    tree: &LocalTree,
    obs: &[Config],
    params: &SprintParams,
    rng: &mut R,
) -> Config {
    let lambda = tree.step();
    let q_x = &tree.node(id).config;
    let q_p = predecessor(id, tree);
    let straight = grad_g1(q_x, &q_p).expect("edges have positive length");
    let mut q_c = q_x.add_scaled(&straight, lambda);
    if !obs.is_empty() {
        let jitter: Vec<f64> =
            (0..q_c.dim()).map(|_| rng.random_range(-lambda / 100.0..lambda / 100.0)).collect();
        q_c = &q_c + &Config::new(jitter);
    }
    let eta = params.eta();
    for _ in 0..params.ascent_iters {
        let mut grad = &straight * params.w1_l;
        grad = grad.add_scaled(&grad_g2(&q_c, tree.goal(), lambda), params.w2_l);
        if !obs.is_empty() {
            let push = grad_g3(q_x, &q_c, obs, lambda, rng).expect("candidate differs from q_x");
            grad = grad.add_scaled(&push, params.w3_l);
        }
        q_c = clamp_length(q_x, &q_c.add_scaled(&grad, eta), lambda, rng);
    }
    q_c
}

/// How the search decides whether to extend a popped node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CullRule {
    #[default]
    Heuristic,
    /// Extend with probability one half.
    Coin,
}

/// How the search picks the next edge direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExtendRule {
    #[default]
    Gradient,
    /// Uniformly random direction, one step long.
    RandomDirection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocalStatus {
    Reached,
    Exhausted,
}

#[derive(Clone, Debug)]
pub struct LocalResult {
    pub status: LocalStatus,
    pub path: Option<Polyline>,
    pub samples_used: u64,
    pub tree: LocalTree,
}

pub fn local_search<R: Rng + ?Sized>(
    root: &Config,
    goal: &Config,
    oracle: &mut CollisionOracle<'_>,
    params: &SprintParams,
    rng: &mut R,
) -> LocalResult {
    local_search_with(root, goal, oracle, params, CullRule::Heuristic, ExtendRule::Gradient, params.max_local_samples, rng)
}

/// Grows a local tree from `root` until a node lands within one step of
/// `goal` or the stack runs dry. `budget` caps the oracle calls made here.
#[allow(clippy::too_many_arguments)]
pub fn local_search_with<R: Rng + ?Sized>(
    root: &Config,
    goal: &Config,
    oracle: &mut CollisionOracle<'_>,
    params: &SprintParams,
    cull: CullRule,
    extend: ExtendRule,
    budget: u64,
    rng: &mut R,
) -> LocalResult {
    let start = oracle.sample_count();
    let lambda = params.lambda;
    let mut tree = LocalTree::from_params(root.clone(), goal.clone(), params);
    let used = |o: &CollisionOracle<'_>| o.sample_count() - start;

    let finish = |tree: LocalTree, last: Option<NodeId>, o: &CollisionOracle<'_>| {
        let path = last.map(|id| {
            let mut pts = tree.path_to(id);
            if pts.last() != Some(goal) {
                pts.push(goal.clone());
            }
            Polyline::new(pts).expect("local path has distinct consecutive points")
        });
        let status = if path.is_some() { LocalStatus::Reached } else { LocalStatus::Exhausted };
        LocalResult { status, path, samples_used: used(o), tree }
    };

    if dist(root, goal) <= lambda + GOAL_TOLERANCE {
        if budget > 0 && oracle.is_free(goal) {
            return finish(tree, Some(LocalTree::ROOT), oracle);
        }
        return finish(tree, None, oracle);
    }

    tree.stack.push((LocalTree::ROOT, params.r_retry));
    while let Some((x, retries)) = tree.stack.pop() {
        if used(oracle) >= budget {
            break;
        }
        let promising = match cull {
            CullRule::Heuristic => valid_node(x, &tree, params),
            CullRule::Coin => rng.random_bool(0.5),
        };
        if !promising {
            continue;
        }
        let candidate = match extend {
            ExtendRule::Gradient => {
                let obs = tree.collision_points(x).to_vec();
                local_edge(x, &tree, &obs, params, rng)
            }
            ExtendRule::RandomDirection => {
                tree.node(x).config.add_scaled(&Config::random_unit(root.dim(), rng), lambda)
            }
        };
        if oracle.is_free(&candidate) {
            let id = tree.insert(x, candidate);
            tree.backprop_progress(id);
            if dist(&tree.node(id).config, goal) <= lambda + GOAL_TOLERANCE
                && used(oracle) < budget
                && oracle.is_free(goal)
            {
                return finish(tree, Some(id), oracle);
            }
            tree.stack.push((x, retries));
            tree.stack.push((id, params.r_retry));
        } else {
            tree.backprop_collision(x, &candidate);
            if retries > 1 {
                tree.stack.push((x, retries - 1));
            }
        }
    }
    finish(tree, None, oracle)
}
