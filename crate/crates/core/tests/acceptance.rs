//! Acceptance criteria for the planner and the harness. Prints one PASS/FAIL
//! line per criterion and exits non-zero if any criterion fails.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sprint::baselines::{kd_nearest, KdTree};
use sprint::bench::{median, run_grid, run_trial, GridConfig, Planner, SeedRange};
use sprint::geometry::{dist, dist_sq, hvs, max_line_deviation, Config, Polyline, Region};
use sprint::global_planner::{plan, select_region, GlobalTree};
use sprint::local_planner::{grad_g3, node_promise, psi2, psi32, subtree_sigma, valid_node, LocalTree, NodeId};
use sprint::world::{CollisionOracle, Scene};
use sprint::{PlanStatus, SprintParams};

const SEEDS: u64 = 100;
const BUDGET: u64 = 50_000;
const MATH_TOL: f64 = 1e-9;
const LINE_TOL: f64 = 1e-9;

/// Scenes whose three-planner grid feeds the ordering criteria.
const GRID_SCENES: [&str; 5] = ["empty_2d", "single_box_2d", "narrow_passage_2d", "vertical_bars_2d", "narrow_passage_6d"];
const GRID_PLANNERS: [&str; 3] = ["sprint", "rrt-connect", "rrt"];

struct Outcome {
    id: u32,
    title: &'static str,
    checks: Vec<(String, bool)>,
    elapsed: Duration,
    limit: Duration,
}

impl Outcome {
    fn passed(&self) -> bool {
        self.elapsed < self.limit && self.checks.iter().all(|(_, ok)| *ok)
    }
}

#[derive(Clone)]
struct Cell {
    solved: Vec<bool>,
    samples: Vec<u64>,
    lengths: Vec<f64>,
    deltas: Vec<f64>,
    paths: Vec<Option<Polyline>>,
    /// Longest edge any trial of this cell may produce.
    max_step: f64,
}

impl Cell {
    fn solved_count(&self) -> usize {
        self.solved.iter().filter(|s| **s).count()
    }

    fn median_samples(&self) -> f64 {
        median(&self.samples.iter().map(|&s| s as f64).collect::<Vec<_>>()).unwrap()
    }

    fn median_solved_samples(&self) -> Option<f64> {
        let v: Vec<f64> = self.samples.iter().zip(&self.solved).filter(|(_, ok)| **ok).map(|(&s, _)| s as f64).collect();
        median(&v)
    }

    fn mean_of(values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / values.len() as f64
    }

    fn mean_length(&self) -> f64 {
        Self::mean_of(&self.lengths)
    }

    fn mean_delta(&self) -> f64 {
        Self::mean_of(&self.deltas)
    }
}

/// Trials are run once per (planner id, scene) and shared between criteria.
#[derive(Default)]
struct Grid {
    cells: HashMap<(String, String), Cell>,
}

impl Grid {
    fn cell(&mut self, planner: &str, scene: &str) -> &Cell {
        let key = (planner.to_string(), scene.to_string());
        if !self.cells.contains_key(&key) {
            let p: Planner = planner.parse().unwrap();
            let sc = Scene::builtin(scene).unwrap();
            let params = SprintParams::default();
            // random-params draws each trial's step from [0.75, 1.25] x lambda
            let max_step = if planner == "sprint-random-params" { 1.25 * params.lambda } else { params.lambda };
            let mut cell = Cell { solved: vec![], samples: vec![], lengths: vec![], deltas: vec![], paths: vec![], max_step };
            for seed in 0..SEEDS {
                let t = run_trial(p, &sc, seed, BUDGET, &params).unwrap();
                let ok = t.result.status == PlanStatus::Solved;
                cell.solved.push(ok);
                cell.samples.push(t.record.total_samples);
                if ok {
                    cell.lengths.push(t.record.path_length.unwrap());
                    cell.deltas.push(t.record.delta_useful_ratio.unwrap());
                }
                cell.paths.push(t.result.path);
            }
            self.cells.insert(key.clone(), cell);
        }
        &self.cells[&key]
    }
}

fn check(checks: &mut Vec<(String, bool)>, ok: bool, what: String) {
    checks.push((what, ok));
}

fn empty_scene(d: usize) -> Scene {
    Scene::new(format!("empty_{d}d"), Config::zeros(d), Config::new(vec![1.0; d]), vec![])
        .unwrap()
        .with_query(Config::new(vec![0.1; d]), Config::new(vec![0.9; d]))
        .unwrap()
}

fn straight_line(checks: &mut Vec<(String, bool)>) {
    let params = SprintParams::default();
    for scene in [Scene::builtin("empty_2d").unwrap(), empty_scene(10)] {
        let (a, b) = (scene.start.clone().unwrap(), scene.goal.clone().unwrap());
        let mut oracle = CollisionOracle::new(&scene);
        let r = plan(&a, &b, &mut oracle, &params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let path = r.path.expect("empty scene is solved");
        let dev = max_line_deviation(path.points(), &a, &b).unwrap();
        // endpoint checks plus one milestone batch before the first local search
        let init = 2 + params.milestone_batch as u64;
        let expected = (dist(&a, &b) / params.lambda).ceil() as u64 + init;
        check(checks, dev <= LINE_TOL, format!("{}: max deviation {dev:.1e} <= {LINE_TOL:.0e}", scene.name));
        check(checks, r.total_samples == expected, format!("{}: samples {} == {expected}", scene.name, r.total_samples));
    }
}

fn completeness(grid: &mut Grid, checks: &mut Vec<(String, bool)>) {
    for scene in ["narrow_passage_2d", "vertical_bars_2d", "narrow_passage_6d"] {
        let cell = grid.cell("sprint", scene);
        let n = cell.solved_count();
        let worst = cell.samples.iter().max().unwrap();
        check(checks, n == SEEDS as usize, format!("{scene}: solved {n}/{SEEDS}, worst {worst} samples"));
    }
}

fn sample_efficiency(grid: &mut Grid, checks: &mut Vec<(String, bool)>) {
    let s = grid.cell("sprint", "narrow_passage_2d").median_samples();
    let c = grid.cell("rrt-connect", "narrow_passage_2d").median_samples();
    let r = grid.cell("rrt", "narrow_passage_2d").median_samples();
    check(checks, s < 0.5 * c, format!("sprint {s} < 0.5 x rrt-connect {c} (ratio {:.3})", s / c));
    check(checks, s < 0.25 * r, format!("sprint {s} < 0.25 x rrt {r} (ratio {:.3})", s / r));
}

fn delta_ordering(grid: &mut Grid, checks: &mut Vec<(String, bool)>) {
    for scene in GRID_SCENES {
        let cells: Vec<Cell> = GRID_PLANNERS.iter().map(|p| grid.cell(p, scene).clone()).collect();
        if cells.iter().any(|c| c.solved_count() < 90) {
            check(checks, true, format!("{scene}: skipped, a planner solved fewer than 90 seeds"));
            continue;
        }
        let [s, c, r] = [cells[0].mean_delta(), cells[1].mean_delta(), cells[2].mean_delta()];
        check(checks, s > c && c > r, format!("{scene}: sprint {s:.4} > rrt-connect {c:.4} > rrt {r:.4}"));
    }
}

fn path_parity(grid: &mut Grid, checks: &mut Vec<(String, bool)>) {
    for scene in GRID_SCENES {
        let s = grid.cell("sprint", scene).clone();
        let c = grid.cell("rrt-connect", scene).clone();
        if s.solved_count() == 0 || c.solved_count() == 0 {
            continue;
        }
        let (ls, lc) = (s.mean_length(), c.mean_length());
        check(checks, ls <= 1.25 * lc, format!("{scene}: sprint {ls:.3} <= 1.25 x rrt-connect {lc:.3} (ratio {:.3})", ls / lc));
    }
}

fn ablations(grid: &mut Grid, checks: &mut Vec<(String, bool)>) {
    let scene = "narrow_passage_2d";
    let default = grid.cell("sprint", scene).clone();
    let base_rate = default.solved_count() as f64 / SEEDS as f64;
    let base_median = default.median_solved_samples().unwrap();

    let nopr3 = grid.cell("sprint-nopr3", scene).clone();
    let rate3 = nopr3.solved_count() as f64 / SEEDS as f64;
    check(checks, rate3 < 0.2 * base_rate, format!("nopr3 success {rate3:.2} < 0.2 x default {base_rate:.2}"));

    for mode in ["sprint-nopr1", "sprint-nopr2"] {
        let cell = grid.cell(mode, scene).clone();
        match cell.median_solved_samples() {
            Some(m) => check(checks, m >= 2.0 * base_median, format!("{mode}: median {m} >= 2 x default {base_median}")),
            None => check(checks, true, format!("{mode}: solved no seeds")),
        }
    }

    let random = grid.cell("sprint-random-params", scene).clone();
    let rate = random.solved_count() as f64 / SEEDS as f64;
    let m = random.median_solved_samples().unwrap_or(f64::INFINITY);
    check(checks, m <= 2.0 * base_median, format!("random-params: median {m} <= 2 x default {base_median}"));
    check(checks, rate >= 0.9, format!("random-params: success {rate:.2} >= 0.90"));
}

fn heuristic_math(checks: &mut Vec<(String, bool)>) {
    let lambda = SprintParams::default().lambda;
    let far = psi2(1e3, lambda);
    check(checks, (far - 1.0).abs() <= MATH_TOL, format!("psi2 far from goal {far} -> 1"));
    check(checks, psi2(0.0, lambda) == 2.0, format!("psi2 at goal {} == 2", psi2(0.0, lambda)));
    check(checks, psi32(0.0, lambda) == 5.0, format!("repulsion peak {} == 5", psi32(0.0, lambda)));

    let (q_x, q_c) = (Config::new(vec![0.0, 0.0]), Config::new(vec![lambda, 0.0]));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let behind = grad_g3(&q_x, &q_c, &[Config::new(vec![-0.3 * lambda, 0.2 * lambda])], lambda, &mut rng).unwrap();
    let ahead = grad_g3(&q_x, &q_c, &[Config::new(vec![0.5 * lambda, 0.2 * lambda])], lambda, &mut rng).unwrap();
    check(checks, hvs(-1e-12) == 0.0 && behind.norm() == 0.0, format!("repulsion gated behind the edge: |push| = {}", behind.norm()));
    check(checks, ahead.norm() > 0.0, format!("repulsion active ahead of the edge: |push| = {:.3}", ahead.norm()));

    let params = SprintParams::default();
    let mut tree = LocalTree::from_params(Config::new(vec![0.0, 0.0]), Config::new(vec![1.0, 0.0]), &params);
    let fresh = node_promise(LocalTree::ROOT, &tree, &params);
    check(checks, fresh == 1.0, format!("promise of an unstalled node {fresh} == 1"));

    // the root subtree has one node, so the stall threshold is c * sqrt(-2 ln kappa)
    let c = params.c_base * (1.0 + params.sigma_slack * (-1.0 / params.n_scale).exp());
    assert_eq!(c, subtree_sigma(1, &params));
    let threshold = (c * (-2.0 * params.kappa.ln()).sqrt()).floor() as u64;
    let obs = Config::new(vec![0.5, 0.5]);
    let mut prev = fresh;
    let mut monotone = true;
    let (mut valid_at, mut invalid_after) = (false, false);
    for stalls in 1..=threshold + 1 {
        tree.backprop_collision(LocalTree::ROOT, &obs);
        let g = node_promise(LocalTree::ROOT, &tree, &params);
        monotone &= g <= prev;
        prev = g;
        if stalls == threshold {
            valid_at = valid_node(LocalTree::ROOT, &tree, &params);
        }
        if stalls == threshold + 1 {
            invalid_after = !valid_node(LocalTree::ROOT, &tree, &params);
        }
    }
    check(checks, monotone, "promise non-increasing as stalls accumulate".into());
    check(checks, valid_at && invalid_after, format!("kappa = {} cuts between {threshold} and {} stalls", params.kappa, threshold + 1));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut invariant = true;
    for _ in 0..100 {
        let rand_pt = |rng: &mut ChaCha8Rng| Config::new(vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]);
        let goal = rand_pt(&mut rng);
        let mut tree = GlobalTree::new(rand_pt(&mut rng), goal.clone());
        for _ in 0..rng.random_range(2..12) {
            tree.push_milestone(rand_pt(&mut rng));
        }
        for m in 1..tree.milestones.len() {
            if rng.random_bool(0.3) {
                let from = rng.random_range(0..tree.nodes.len());
                let seg = Polyline::new(vec![tree.nodes[from].clone(), tree.milestones[m].clone()]).unwrap();
                tree.connect(from, m, seg);
            }
        }
        for _ in 0..rng.random_range(0..4) {
            tree.add_local_min(Region::new(rand_pt(&mut rng), rand_pt(&mut rng)).unwrap());
        }
        let base = SprintParams::default();
        let expected = select_region(&tree, &goal, &base).unwrap();
        for k in [0.01, 0.5, 3.0, 250.0] {
            let scaled = SprintParams { w1_g: base.w1_g * k, w2_g: base.w2_g * k, ..base.clone() };
            invariant &= select_region(&tree, &goal, &scaled).unwrap() == expected;
        }
    }
    check(checks, invariant, "region argmax unchanged under positive weight scaling (100 trees)".into());
}

/// Checkpoints and subtree sizes recomputed from scratch.
fn scan_checkpoints(tree: &LocalTree) -> (Vec<NodeId>, Vec<u64>) {
    let n = tree.len();
    let cps: Vec<NodeId> = (0..n).filter(|&i| i == LocalTree::ROOT || tree.node(i).child_count() >= 2).collect();
    let mut size = vec![1u64; n];
    // children always have larger ids than their parents
    for i in (1..n).rev() {
        let p = tree.node(i).parent.unwrap();
        size[p] += size[i];
    }
    let counts = cps.iter().map(|&cp| size[cp]).collect();
    (cps, counts)
}

fn structural(grid: &mut Grid, checks: &mut Vec<(String, bool)>) {
    let params = SprintParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cp_ok = true;
    for _ in 0..200 {
        let mut tree = LocalTree::from_params(Config::new(vec![0.0, 0.0]), Config::new(vec![1.0, 1.0]), &params);
        for _ in 0..rng.random_range(1..120) {
            let parent = rng.random_range(0..tree.len());
            let q = Config::new(vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]);
            let id = tree.insert(parent, q);
            tree.backprop_progress(id);
        }
        let (expected, sizes) = scan_checkpoints(&tree);
        let mut got: Vec<NodeId> = tree.checkpoints().collect();
        got.sort();
        cp_ok &= got == expected;
        for (cp, size) in expected.iter().zip(&sizes) {
            cp_ok &= tree.record(*cp).map(|r| r.subtree_node_count) == Some(*size);
        }
        for id in 0..tree.len() {
            let mut ancestors = vec![];
            let mut cur = Some(id);
            while let Some(c) = cur {
                if tree.node(c).is_checkpoint {
                    ancestors.push(c);
                }
                cur = tree.node(c).parent;
            }
            cp_ok &= tree.checkpoint_path(id).collect::<Vec<_>>() == ancestors;
        }
    }
    check(checks, cp_ok, "checkpoint set, sizes and chains match a full scan (200 scripts)".into());

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut kd_ok = true;
    for d in [2usize, 6, 10] {
        let pts: Vec<Config> = (0..1000).map(|_| Config::new((0..d).map(|_| rng.random_range(0.0..1.0)).collect())).collect();
        let mut kd = KdTree::new();
        for (i, p) in pts.iter().enumerate() {
            kd.insert(p.clone(), i);
        }
        for _ in 0..100 {
            let q = Config::new((0..d).map(|_| rng.random_range(0.0..1.0)).collect());
            let linear = (0..pts.len()).min_by(|&a, &b| dist_sq(&pts[a], &q).total_cmp(&dist_sq(&pts[b], &q))).unwrap();
            kd_ok &= kd_nearest(&kd, &q).unwrap() == linear;
        }
    }
    check(checks, kd_ok, "kd nearest equals linear scan (1000 points x 100 queries, d = 2, 6, 10)".into());

    let mut worst_ratio = 0.0f64;
    let mut degenerate = 0;
    let mut paths = 0;
    for cell in grid.cells.values() {
        for path in cell.paths.iter().flatten() {
            paths += 1;
            for (a, b) in path.segments() {
                let l = dist(a, b);
                worst_ratio = worst_ratio.max(l / cell.max_step);
                if l == 0.0 {
                    degenerate += 1;
                }
            }
        }
    }
    check(
        checks,
        paths > 0 && worst_ratio <= 1.0 + 1e-9 && degenerate == 0,
        format!("{paths} paths: longest edge {worst_ratio:.6} x step bound, {degenerate} zero-length edges"),
    );

    let mut same = true;
    for scene in ["narrow_passage_2d", "narrow_passage_6d"] {
        let sc = Scene::builtin(scene).unwrap();
        for planner in ["sprint", "sprint-random-params", "rrt", "rrt-connect"] {
            for seed in 0..5 {
                let p: Planner = planner.parse().unwrap();
                let mut a = run_trial(p, &sc, seed, 20_000, &params).unwrap();
                let mut b = run_trial(p, &sc, seed, 20_000, &params).unwrap();
                a.result.wall_time = 0.0;
                b.result.wall_time = 0.0;
                same &= format!("{:?}", a.result) == format!("{:?}", b.result) && a.samples == b.samples;
            }
        }
    }
    check(checks, same, "plan results byte-identical across reruns of a seed".into());

    let config = GridConfig {
        scenes: vec!["narrow_passage_2d".into(), "single_box_2d".into()],
        planners: vec!["sprint".into(), "rrt".into(), "rrt-connect".into()],
        seeds: SeedRange { start: 0, count: 10 },
        budget: Some(20_000),
        params: None,
        svg: false,
        wall_time: false,
    };
    let dir = tempfile::tempdir().unwrap();
    run_grid(&config, dir.path().join("a"), &params).unwrap();
    run_grid(&config, dir.path().join("b"), &params).unwrap();
    let mut csv_same = true;
    for file in ["trials.csv", "summary.csv"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        csv_same &= a == b;
    }
    check(checks, csv_same, "trials.csv and summary.csv byte-identical across reruns".into());
}

fn run(id: u32, title: &'static str, limit_s: u64, f: impl FnOnce(&mut Vec<(String, bool)>)) -> Outcome {
    let start = Instant::now();
    let mut checks = Vec::new();
    f(&mut checks);
    Outcome { id, title, checks, elapsed: start.elapsed(), limit: Duration::from_secs(limit_s) }
}

fn main() -> ExitCode {
    let mut grid = Grid::default();
    let outcomes = vec![
        run(1, "straight-line resolution", 1, straight_line),
        run(2, "completeness smoke", 120, |c| completeness(&mut grid, c)),
        run(3, "sample-efficiency ordering", 300, |c| sample_efficiency(&mut grid, c)),
        run(4, "delta-usefulness ordering", 300, |c| delta_ordering(&mut grid, c)),
        run(5, "path-length parity", 300, |c| path_parity(&mut grid, c)),
        run(6, "ablation degradation", 600, |c| ablations(&mut grid, c)),
        run(7, "heuristic math", 1, heuristic_math),
        run(8, "structural invariants", 30, |c| structural(&mut grid, c)),
    ];

    let mut failed = 0;
    for o in &outcomes {
        let verdict = if o.passed() { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {}: {} ({:.2}s, limit {}s)", o.id, o.title, o.elapsed.as_secs_f64(), o.limit.as_secs());
        for (what, ok) in &o.checks {
            println!("    [{}] {what}", if *ok { "ok" } else { "x" });
        }
        if !o.passed() {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
