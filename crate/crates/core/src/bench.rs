//! Benchmark harness: trial grids, the δ-useful metric, ablations, CSV
//! output and SVG renders of 2-D trials.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{rrt_connect_plan, rrt_plan, BaselineParams};
use crate::error::{Error, Result};
use crate::geometry::{point_segment_dist, Config, Polyline};
use crate::global_planner::{plan_with, Heuristics, PlanResult, PlanStatus, RegionRule, SprintParams};
use crate::local_planner::{CullRule, ExtendRule};
use crate::world::{resolve_scene, CollisionOracle, Obstacle, Scene};

pub const CSV_HEADER: [&str; 8] =
    ["planner", "scene", "seed", "status", "total_samples", "path_length", "wall_time_s", "delta_useful_ratio"];

/// Fraction of all oracle samples that were free and within `delta` of the
/// final path.
pub fn delta_useful_ratio(samples: &[(Config, bool)], path: &Polyline, delta: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("sample list"));
    }
    let useful = samples
        .iter()
        .filter(|(q, free)| *free && path.segments().any(|(a, b)| point_segment_dist(q, a, b) <= delta))
        .count();
    Ok(useful as f64 / samples.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AblationMode {
    #[default]
    Default,
    /// Every continuous parameter scaled by an independent factor in [0.75, 1.25].
    RandomParams,
    NoPr1,
    NoPr2,
    NoPr3,
}

impl AblationMode {
    pub const ALL: [AblationMode; 5] =
        [AblationMode::Default, AblationMode::RandomParams, AblationMode::NoPr1, AblationMode::NoPr2, AblationMode::NoPr3];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::Default => "default",
            AblationMode::RandomParams => "random-params",
            AblationMode::NoPr1 => "nopr1",
            AblationMode::NoPr2 => "nopr2",
            AblationMode::NoPr3 => "nopr3",
        }
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation mode {s:?}")))
    }
}

/// Parameters and decision rules a SPRINT trial actually runs with.
#[derive(Clone, Debug, PartialEq)]
pub struct SprintVariant {
    pub params: SprintParams,
    pub heuristics: Heuristics,
}

pub fn apply_ablation<R: Rng + ?Sized>(params: &SprintParams, mode: AblationMode, rng: &mut R) -> SprintVariant {
    let mut params = params.clone();
    let mut heuristics = Heuristics::default();
    match mode {
        AblationMode::Default => {}
        AblationMode::RandomParams => {
            let eta = params.eta();
            let eps = params.eps_prog();
            let mut factor = || rng.random_range(0.75..=1.25);
            params.lambda *= factor();
            params.kappa *= factor();
            params.w1_g *= factor();
            params.w2_g *= factor();
            params.w1_l *= factor();
            params.w2_l *= factor();
            params.w3_l *= factor();
            params.c_base *= factor();
            params.sigma_slack *= factor();
            params.n_scale *= factor();
            params.eta = Some(eta * factor());
            params.eps_prog = Some(eps * factor());
        }
        AblationMode::NoPr1 => heuristics.region = RegionRule::Uniform,
        AblationMode::NoPr2 => heuristics.cull = CullRule::Coin,
        AblationMode::NoPr3 => heuristics.extend = ExtendRule::RandomDirection,
    }
    SprintVariant { params, heuristics }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Planner {
    Sprint(AblationMode),
    Rrt,
    RrtConnect,
}

impl Planner {
    pub fn id(self) -> String {
        match self {
            Planner::Sprint(AblationMode::Default) => "sprint".into(),
            Planner::Sprint(m) => format!("sprint-{}", m.as_str()),
            Planner::Rrt => "rrt".into(),
            Planner::RrtConnect => "rrt-connect".into(),
        }
    }
}

impl FromStr for Planner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sprint" => Ok(Planner::Sprint(AblationMode::Default)),
            "rrt" => Ok(Planner::Rrt),
            "rrt-connect" => Ok(Planner::RrtConnect),
            _ => s
                .strip_prefix("sprint-")
                .and_then(|m| m.parse().ok())
                .map(Planner::Sprint)
                .ok_or_else(|| Error::Config(format!("unknown planner {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub planner: String,
    pub scene: String,
    pub seed: u64,
    pub status: String,
    pub total_samples: u64,
    pub path_length: Option<f64>,
    pub wall_time_s: f64,
    pub delta_useful_ratio: Option<f64>,
}

/// Everything a single trial produced.
#[derive(Clone, Debug)]
pub struct Trial {
    pub record: TrialRecord,
    pub result: PlanResult,
    pub samples: Vec<(Config, bool)>,
}

/// Runs one trial. `budget` caps the oracle samples for every planner and
/// the baselines step at SPRINT's λ.
pub fn run_trial(planner: Planner, scene: &Scene, seed: u64, budget: u64, params: &SprintParams) -> Result<Trial> {
    let q_init = scene.start.clone().ok_or_else(|| Error::Config(format!("scene {} has no start", scene.name)))?;
    let q_goal = scene.goal.clone().ok_or_else(|| Error::Config(format!("scene {} has no goal", scene.name)))?;
    let mut oracle = CollisionOracle::recording(scene);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let result = match planner {
        Planner::Sprint(mode) => {
            let mut ablation_rng = ChaCha8Rng::seed_from_u64(seed);
            ablation_rng.set_stream(1);
            let variant = apply_ablation(params, mode, &mut ablation_rng);
            let p = SprintParams { max_total_samples: budget, seed, ..variant.params };
            plan_with(&q_init, &q_goal, &mut oracle, &p, variant.heuristics, &mut rng)?
        }
        Planner::Rrt | Planner::RrtConnect => {
            let bp = BaselineParams { step: params.lambda, max_samples: budget, seed, ..Default::default() };
            if planner == Planner::Rrt {
                rrt_plan(&q_init, &q_goal, &mut oracle, &bp, &mut rng)?
            } else {
                rrt_connect_plan(&q_init, &q_goal, &mut oracle, &bp, &mut rng)?
            }
        }
    };
    let samples = oracle.take_samples().unwrap_or_default();
    let delta_useful_ratio = match &result.path {
        Some(path) => Some(delta_useful_ratio(&samples, path, 2.0 * params.lambda)?),
        None => None,
    };
    let record = TrialRecord {
        planner: planner.id(),
        scene: scene.name.clone(),
        seed,
        status: result.status.as_str().into(),
        total_samples: result.total_samples,
        path_length: (result.status == PlanStatus::Solved).then_some(result.path_length),
        wall_time_s: result.wall_time,
        delta_useful_ratio,
    };
    Ok(Trial { record, result, samples })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    pub start: u64,
    pub count: u64,
}

/// A benchmark grid read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Built-in scene names or paths to scene files.
    pub scenes: Vec<String>,
    pub planners: Vec<String>,
    pub seeds: SeedRange,
    /// Per-trial sample budget; defaults to `max_total_samples`.
    #[serde(default)]
    pub budget: Option<u64>,
    /// Planner parameter overrides.
    #[serde(default)]
    pub params: Option<serde_json::Value>,
    /// Writes one SVG per 2-D trial into `<out>/svg`.
    #[serde(default)]
    pub svg: bool,
    /// When false the wall_time_s column is written as 0, making reruns byte-identical.
    #[serde(default = "default_true")]
    pub wall_time: bool,
}

fn default_true() -> bool {
    true
}

impl GridConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
    }
}

/// Applies a JSON object of overrides on top of `base`.
pub fn override_params(base: &SprintParams, overrides: &serde_json::Value) -> Result<SprintParams> {
    let mut merged = serde_json::to_value(base).expect("params serialize");
    let (Some(target), Some(src)) = (merged.as_object_mut(), overrides.as_object()) else {
        return Err(Error::Config("params override must be a JSON object".into()));
    };
    for (k, v) in src {
        target.insert(k.clone(), v.clone());
    }
    let params: SprintParams = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
    params.validate()?;
    Ok(params)
}

pub fn load_params(path: impl AsRef<Path>, base: &SprintParams) -> Result<SprintParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })?;
    override_params(base, &value)
}

/// Aggregate statistics for one (planner, scene) cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub planner: String,
    pub scene: String,
    pub trials: usize,
    pub solved: usize,
    pub success_rate: f64,
    pub median_samples: f64,
    pub mean_samples: f64,
    pub stderr_samples: f64,
    pub median_path_length: Option<f64>,
    pub mean_path_length: Option<f64>,
    pub stderr_path_length: Option<f64>,
    pub median_delta_useful_ratio: Option<f64>,
    pub mean_delta_useful_ratio: Option<f64>,
    pub stderr_delta_useful_ratio: Option<f64>,
    pub mean_wall_time_s: f64,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Standard error of the mean, using the sample standard deviation.
pub fn std_error(values: &[f64]) -> Option<f64> {
    let n = values.len();
    let m = mean(values)?;
    if n < 2 {
        return Some(0.0);
    }
    let var = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((var / n as f64).sqrt())
}

pub fn summarize(records: &[TrialRecord]) -> Vec<CellSummary> {
    let mut cells: Vec<(String, String)> = Vec::new();
    for r in records {
        let key = (r.planner.clone(), r.scene.clone());
        if !cells.contains(&key) {
            cells.push(key);
        }
    }
    cells
        .into_iter()
        .map(|(planner, scene)| {
            let rows: Vec<_> = records.iter().filter(|r| r.planner == planner && r.scene == scene).collect();
            let samples: Vec<f64> = rows.iter().map(|r| r.total_samples as f64).collect();
            let lengths: Vec<f64> = rows.iter().filter_map(|r| r.path_length).collect();
            let ratios: Vec<f64> = rows.iter().filter_map(|r| r.delta_useful_ratio).collect();
            let times: Vec<f64> = rows.iter().map(|r| r.wall_time_s).collect();
            let solved = rows.iter().filter(|r| r.status == PlanStatus::Solved.as_str()).count();
            CellSummary {
                planner,
                scene,
                trials: rows.len(),
                solved,
                success_rate: solved as f64 / rows.len() as f64,
                median_samples: median(&samples).unwrap_or(0.0),
                mean_samples: mean(&samples).unwrap_or(0.0),
                stderr_samples: std_error(&samples).unwrap_or(0.0),
                median_path_length: median(&lengths),
                mean_path_length: mean(&lengths),
                stderr_path_length: std_error(&lengths),
                median_delta_useful_ratio: median(&ratios),
                mean_delta_useful_ratio: mean(&ratios),
                stderr_delta_useful_ratio: std_error(&ratios),
                mean_wall_time_s: mean(&times).unwrap_or(0.0),
            }
        })
        .collect()
}

pub fn write_trials_csv(path: impl AsRef<Path>, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path.as_ref())?;
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| Error::Io { path: path.as_ref().into(), source })
}

pub fn write_summary_csv(path: impl AsRef<Path>, cells: &[CellSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for c in cells {
        w.serialize(c)?;
    }
    w.flush().map_err(|source| Error::Io { path: path.as_ref().into(), source })
}

/// Output of [`run_grid`].
#[derive(Clone, Debug)]
pub struct GridOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<CellSummary>,
    pub trials_csv: PathBuf,
    pub summary_csv: PathBuf,
}

/// Runs every (planner, scene, seed) trial of `config` in that order and
/// writes `trials.csv` and `summary.csv` into `out`. Unknown planners or
/// scenes fail before any trial runs; failed trials do not.
pub fn run_grid(config: &GridConfig, out: impl AsRef<Path>, base: &SprintParams) -> Result<GridOutput> {
    let planners = config.planners.iter().map(|p| p.parse::<Planner>()).collect::<Result<Vec<_>>>()?;
    let scenes = config
        .scenes
        .iter()
        .map(|s| resolve_scene(s).map_err(|e| Error::Config(format!("scene {s:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    for s in &scenes {
        if s.start.is_none() || s.goal.is_none() {
            return Err(Error::Config(format!("scene {} has no start/goal query", s.name)));
        }
    }
    let params = match &config.params {
        Some(v) => override_params(base, v)?,
        None => base.clone(),
    };
    let budget = config.budget.unwrap_or(params.max_total_samples);
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|source| Error::Io { path: out.into(), source })?;
    let svg_dir = out.join("svg");
    if config.svg {
        fs::create_dir_all(&svg_dir).map_err(|source| Error::Io { path: svg_dir.clone(), source })?;
    }

    let mut records = Vec::new();
    for &planner in &planners {
        for scene in &scenes {
            for seed in config.seeds.start..config.seeds.start + config.seeds.count {
                let trial = run_trial(planner, scene, seed, budget, &params)?;
                if config.svg && scene.dim() == 2 {
                    let svg = render_svg(scene, &trial.samples, &trial.result.tree_edges, trial.result.path.as_ref())?;
                    let file = svg_dir.join(format!("{}_{}_{}.svg", planner.id(), scene.name, seed));
                    fs::write(&file, svg).map_err(|source| Error::Io { path: file, source })?;
                }
                let mut record = trial.record;
                if !config.wall_time {
                    record.wall_time_s = 0.0;
                }
                records.push(record);
            }
        }
    }
    let summary = summarize(&records);
    let trials_csv = out.join("trials.csv");
    let summary_csv = out.join("summary.csv");
    write_trials_csv(&trials_csv, &records)?;
    write_summary_csv(&summary_csv, &summary)?;
    Ok(GridOutput { records, summary, trials_csv, summary_csv })
}

const SVG_SIZE: f64 = 600.0;

/// Renders a 2-D trial: bounds, obstacles, every oracle sample (free in
/// green, colliding in red), tree edges and the final path.
pub fn render_svg(
    scene: &Scene,
    samples: &[(Config, bool)],
    tree_edges: &[(Config, Config)],
    path: Option<&Polyline>,
) -> Result<String> {
    if scene.dim() != 2 {
        return Err(Error::UnsupportedDimension(scene.dim()));
    }
    let (lo, hi) = (scene.lower.coords(), scene.upper.coords());
    let scale = SVG_SIZE / (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let w = (hi[0] - lo[0]) * scale;
    let h = (hi[1] - lo[1]) * scale;
    let px = |q: &[f64]| ((q[0] - lo[0]) * scale, (hi[1] - q[1]) * scale);
    let legend_h = 40.0;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.1}" height="{:.1}" viewBox="0 0 {w:.1} {:.1}">"#,
        h + legend_h,
        h + legend_h
    );
    let _ = writeln!(s, r##"<rect id="bounds" x="0" y="0" width="{w:.1}" height="{h:.1}" fill="#ffffff" stroke="#000000"/>"##);

    let _ = writeln!(s, r##"<g id="obstacles" fill="#555555">"##);
    for o in &scene.obstacles {
        match o {
            Obstacle::Box { min, max } => {
                let (x0, y1) = px(min.coords());
                let (x1, y0) = px(max.coords());
                let _ = writeln!(s, r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}"/>"#, x1 - x0, y1 - y0);
            }
            Obstacle::Sphere { center, radius } => {
                let (cx, cy) = px(center.coords());
                let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{:.2}"/>"#, radius * scale);
            }
        }
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r##"<g id="tree" stroke="#3366cc" stroke-width="0.8">"##);
    for (a, b) in tree_edges {
        let (x0, y0) = px(a.coords());
        let (x1, y1) = px(b.coords());
        let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}"/>"#);
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g id="samples">"#);
    for (q, free) in samples {
        let (x, y) = px(q.coords());
        let fill = if *free { "#2ca02c" } else { "#d62728" };
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5" fill="{fill}"/>"#);
    }
    let _ = writeln!(s, "</g>");

    if let Some(path) = path {
        let mut d = String::new();
        for (i, q) in path.points().iter().enumerate() {
            let (x, y) = px(q.coords());
            let _ = write!(d, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" });
        }
        let _ = writeln!(s, r##"<path id="solution" d="{}" fill="none" stroke="#ff7f0e" stroke-width="2.5"/>"##, d.trim_end());
    }

    let free = samples.iter().filter(|(_, f)| *f).count();
    let _ = writeln!(
        s,
        r#"<text id="legend" x="8" y="{:.1}" font-family="sans-serif" font-size="14">samples: {} (free {}, colliding {})</text>"#,
        h + 26.0,
        samples.len(),
        free,
        samples.len() - free
    );
    let _ = writeln!(s, "</svg>");
    Ok(s)
}
