use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use sprint::bench::{load_params, render_svg, run_grid, run_trial, AblationMode, GridConfig, Planner};
use sprint::geometry::Config;
use sprint::world::resolve_scene;
use sprint::{Error, SprintParams};

/// Sampling-based path planning and benchmarking.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// JSON object overriding any planner parameter.
    #[arg(long, global = true)]
    params: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a single query and print a JSON summary.
    Plan {
        /// Built-in scene name or path to a scene JSON file.
        #[arg(long)]
        scene: String,
        /// sprint, rrt or rrt-connect.
        #[arg(long, default_value = "sprint")]
        planner: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// default, random-params, nopr1, nopr2 or nopr3 (sprint only).
        #[arg(long)]
        ablation: Option<String>,
        /// Write a render of the trial (2-D scenes only).
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Override the scene's start, as comma-separated coordinates.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        start: Option<Vec<f64>>,
        /// Override the scene's goal, as comma-separated coordinates.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        goal: Option<Vec<f64>>,
    },
    /// Run a benchmark grid and write trials.csv and summary.csv.
    ///
    /// delta_useful_ratio is the share of all collision-check samples of a
    /// trial (free and colliding) that were free and within 2λ of the final
    /// path.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    let params = match &cli.params {
        Some(p) => load_params(p, &SprintParams::default())?,
        None => SprintParams::default(),
    };
    match cli.command {
        Command::Plan { scene, planner, seed, ablation, svg, start, goal } => {
            let mut scene = resolve_scene(&scene)?;
            if let Some(s) = start {
                scene.start = Some(Config::try_new(s)?);
            }
            if let Some(g) = goal {
                scene.goal = Some(Config::try_new(g)?);
            }
            scene.validate()?;
            let mut planner: Planner = planner.parse()?;
            if let Some(mode) = ablation {
                let mode: AblationMode = mode.parse()?;
                match planner {
                    Planner::Sprint(_) => planner = Planner::Sprint(mode),
                    _ => return Err(Error::Config("--ablation applies only to sprint".into())),
                }
            }
            let trial = run_trial(planner, &scene, seed, params.max_total_samples, &params)?;
            if let Some(out) = svg {
                let doc = render_svg(&scene, &trial.samples, &trial.result.tree_edges, trial.result.path.as_ref())?;
                std::fs::write(&out, doc).map_err(|source| Error::Io { path: out, source })?;
            }
            let r = &trial.record;
            let summary = json!({
                "planner": r.planner,
                "scene": r.scene,
                "seed": r.seed,
                "status": r.status,
                "total_samples": r.total_samples,
                "path_length": r.path_length,
                "wall_time_s": r.wall_time_s,
                "delta_useful_ratio": r.delta_useful_ratio,
                "path": trial.result.path.as_ref().map(|p| p.points().to_vec()),
            });
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
        }
        Command::Bench { config, out } => {
            let config = GridConfig::load(&config)?;
            let grid = run_grid(&config, &out, &params)?;
            println!("{} trials written to {}", grid.records.len(), grid.trials_csv.display());
            println!("summary written to {}", grid.summary_csv.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
