//! Command-line front door: dataset generation, training, evaluation,
//! parameter identification, planning, experiments, and the grid oracle.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::adapt::{grid_optimum_action, GPModel};
use crate::bench::{run_experiment, Agent, RolloutBackend};
use crate::config::RunConfig;
use crate::numerics::{LBFGSConfig, Termination};
use crate::planner::plan_traced;
use crate::skills::{
    build_skill, data_loss, identify_parameter, read_dataset_csv, read_model, train,
    write_dataset_csv, write_model, CollocationSet, Skill, SkillSet,
};
use crate::worldsim::{
    execute_action, generate_dataset, oracle_params, training_bounds, Geometry, OracleMode,
    OraclePredictor, SkillPredictor, Task, TaskDef,
};
use crate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "phyplan",
    version,
    about = "Physics-informed skill models, tree-search planning, and GP-corrected adaptation on toy rigid-body tasks"
)]
pub struct Cli {
    /// TOML configuration file; omitted keys keep built-in defaults (see
    /// phyplan.example.toml for the schema).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an oracle-labelled training set over the skill's canonical
    /// ranges and write it as CSV.
    GenData {
        /// Skill to sample: swinging, sliding, throwing, bouncing, hitting.
        #[arg(long)]
        skill: String,
        /// Number of rows.
        #[arg(long)]
        n: usize,
        /// Gaussian noise sigma added to each target component.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Sampling seed; falls back to PHYPLAN_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a skill model on a dataset CSV and write the model file.
    Train {
        #[arg(long)]
        skill: String,
        /// Training dataset CSV.
        #[arg(long)]
        data: PathBuf,
        /// Collocation points per data row.
        #[arg(long, default_value_t = 4)]
        colloc_ratio: usize,
        /// Init and collocation seed; falls back to PHYPLAN_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        /// Output model path.
        #[arg(long)]
        out: PathBuf,
        /// Optimizer iteration budget.
        #[arg(long)]
        max_iters: Option<usize>,
        /// Drop the physics loss and fit the data alone.
        #[arg(long)]
        data_only: bool,
    },
    /// Print a trained model's mean squared error on a dataset.
    Eval {
        /// Model file written by train.
        #[arg(long)]
        model: PathBuf,
        /// Evaluation dataset CSV.
        #[arg(long)]
        data: PathBuf,
    },
    /// Estimate a skill's unknown physical constant by joint training.
    Identify {
        /// Skill with an unknown constant: swinging (l) or sliding (mu).
        #[arg(long)]
        skill: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Also write the jointly trained model.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan one action for a task and print it.
    Plan {
        /// Task name: launch, bounce, slide, or bridge.
        #[arg(long)]
        task: String,
        /// Directory of trained skill models (<skill>.bin) to roll out on;
        /// without it rollouts use the analytic oracle.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Roll out on the slow reference oracle (RK4 from zero on every
        /// query) instead of the fast analytic one.
        #[arg(long, conflicts_with = "models")]
        slow_oracle: bool,
        /// Planner seed; falls back to PHYPLAN_SEED, then the config value.
        #[arg(long)]
        seed: Option<u64>,
        /// Tree-search iterations (K).
        #[arg(long)]
        iterations: Option<usize>,
        /// Arms per expansion (D).
        #[arg(long)]
        arms: Option<usize>,
        /// Print one line per iteration: index, selected path, rollout
        /// value, best so far.
        #[arg(long)]
        trace: bool,
        /// Execute the planned action and report the realized reward.
        #[arg(long)]
        execute: bool,
    },
    /// Run the task x agent x seed experiment grid and write the flat
    /// results CSV.
    Bench {
        /// Comma-separated task names, or "all".
        #[arg(long)]
        tasks: Option<String>,
        /// Comma-separated agents: phyplan, phyplan_no_gp, random.
        #[arg(long)]
        agents: Option<String>,
        /// Executed actions per (task, agent, seed) cell.
        #[arg(long)]
        attempts: Option<usize>,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Velocity noise sigma during execution.
        #[arg(long)]
        noise: Option<f64>,
        /// Directory of trained skill models; without it rollouts use the
        /// slow reference oracle.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Per-dimension grid resolution for the regret denominator.
        #[arg(long)]
        grid_resolution: Option<usize>,
        /// Results CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Exhaustively evaluate a task's action grid and print the optimum.
    GridOpt {
        #[arg(long)]
        task: String,
        /// Per-dimension point count.
        #[arg(long)]
        resolution: Option<usize>,
    },
}

/// Parses argv, runs the command, and reports failures as a one-line
/// diagnostic with a nonzero exit code.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match cli.execute() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

impl Cli {
    fn execute(self) -> Result<()> {
        let cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        match self.command {
            Command::GenData { skill, n, noise, seed, out } => {
                gen_data(&cfg, &skill, n, noise, seed, &out)
            }
            Command::Train { skill, data, colloc_ratio, seed, out, max_iters, data_only } => {
                train_cmd(&cfg, &skill, &data, colloc_ratio, seed, &out, max_iters, data_only)
            }
            Command::Eval { model, data } => eval_cmd(&model, &data),
            Command::Identify { skill, data, seed, max_iters, out } => {
                identify_cmd(&skill, &data, seed, max_iters, out.as_deref())
            }
            Command::Plan { task, models, slow_oracle, seed, iterations, arms, trace, execute } => {
                plan_cmd(&cfg, &task, models.as_deref(), slow_oracle, seed, iterations, arms, trace, execute)
            }
            Command::Bench {
                tasks,
                agents,
                attempts,
                seeds,
                noise,
                models,
                grid_resolution,
                out,
            } => bench_cmd(
                &cfg,
                tasks.as_deref(),
                agents.as_deref(),
                attempts,
                seeds,
                noise,
                models.as_deref(),
                grid_resolution,
                &out,
            ),
            Command::GridOpt { task, resolution } => grid_opt_cmd(&cfg, &task, resolution),
        }
    }
}

/// Errors with the offending path up front; bare io errors name only the
/// errno.
fn require_file(path: &Path, role: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{role} file not found: {}", path.display()),
        )))
    }
}

/// Explicit flag, then the PHYPLAN_SEED environment variable, then
/// `default`.
fn resolve_seed(flag: Option<u64>, default: u64) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("PHYPLAN_SEED") {
        Ok(text) => text.trim().parse().map_err(|_| {
            Error::Config(format!("PHYPLAN_SEED must be an unsigned integer, got {text:?}"))
        }),
        Err(std::env::VarError::NotPresent) => Ok(default),
        Err(e) => Err(Error::Config(format!("PHYPLAN_SEED: {e}"))),
    }
}

fn parse_tasks(text: &str) -> Result<Vec<Task>> {
    if text.trim() == "all" {
        return Ok(Task::ALL.to_vec());
    }
    text.split(',').map(|n| Task::from_name(n.trim())).collect()
}

fn parse_agents(text: &str) -> Result<Vec<Agent>> {
    text.split(',').map(|n| Agent::from_name(n.trim())).collect()
}

/// Loads `<skill>.bin` from `dir` for every skill in the given tasks'
/// chains.
fn load_skill_set(dir: &Path, tasks: &[Task], geometry: Geometry) -> Result<SkillSet> {
    let mut set = SkillSet::new();
    for &task in tasks {
        for &skill in &TaskDef::new(task, geometry).skill_chain {
            if set.get(skill).is_some() {
                continue;
            }
            let path = dir.join(format!("{}.bin", skill.name()));
            if !path.is_file() {
                return Err(Error::MissingModel {
                    skill: skill.name().to_string(),
                    path: path.display().to_string(),
                });
            }
            let model = read_model(&path)?;
            if model.spec.skill != skill {
                return Err(Error::Format(format!(
                    "{} holds a {} model, expected {}",
                    path.display(),
                    model.spec.skill,
                    skill
                )));
            }
            set.insert(model);
        }
    }
    Ok(set)
}

fn gen_data(
    cfg: &RunConfig,
    skill: &str,
    n: usize,
    noise: f64,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let skill = Skill::from_name(skill)?;
    let seed = resolve_seed(seed, 0)?;
    let geometry = cfg.geometry();
    let data = generate_dataset(
        skill,
        &oracle_params(skill, &geometry),
        n,
        &training_bounds(skill),
        noise,
        seed,
    )?;
    write_dataset_csv(out, &build_skill(skill), &data)?;
    println!("wrote {} rows to {}", data.rows.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    cfg: &RunConfig,
    skill: &str,
    data_path: &Path,
    colloc_ratio: usize,
    seed: Option<u64>,
    out: &Path,
    max_iters: Option<usize>,
    data_only: bool,
) -> Result<()> {
    let skill = Skill::from_name(skill)?;
    let seed = resolve_seed(seed, 0)?;
    let geometry = cfg.geometry();
    // Training assumes the physics is known; identify estimates instead.
    let mut spec = match skill {
        Skill::Swinging => build_skill(skill).with_known_param("l", geometry.pendulum_length)?,
        Skill::Sliding => build_skill(skill).with_known_param("mu", geometry.mu)?,
        _ => build_skill(skill),
    };
    if data_only {
        spec.has_physics_loss = false;
    }
    require_file(data_path, "dataset")?;
    let data = read_dataset_csv(data_path, &spec)?;
    let bounds = data.input_bounds();
    let colloc = if spec.has_physics_loss {
        CollocationSet::sample(
            &bounds,
            colloc_ratio * data.rows.len(),
            seed.wrapping_add(0x9e37_79b9),
        )
    } else {
        CollocationSet::bounds_only(&bounds)
    };
    let mut lbfgs = LBFGSConfig::default();
    if let Some(budget) = max_iters {
        lbfgs.max_iterations = budget;
    }
    let model = train(&spec, &data, &colloc, &lbfgs, seed)?;
    write_model(out, &model)?;
    let report = &model.training_report;
    println!(
        "trained {} on {} rows: data loss {:.3e}, physics loss {:.3e}, {} iterations ({}); wrote {}",
        skill,
        data.rows.len(),
        report.final_data_loss,
        report.final_physics_loss,
        report.iterations,
        termination_label(report.status),
        out.display()
    );
    Ok(())
}

fn termination_label(status: Termination) -> &'static str {
    match status {
        Termination::Converged => "converged",
        Termination::MaxIterations => "iteration budget exhausted",
        Termination::LineSearchFailed => "line search stalled",
        Termination::NonFinite => "diverged, best point kept",
    }
}

fn eval_cmd(model_path: &Path, data_path: &Path) -> Result<()> {
    require_file(model_path, "model")?;
    let model = read_model(model_path)?;
    require_file(data_path, "dataset")?;
    let data = read_dataset_csv(data_path, &model.spec)?;
    let mse = data_loss(&model, &data)?;
    println!("validation MSE: {mse:e}");
    Ok(())
}

fn identify_cmd(
    skill: &str,
    data_path: &Path,
    seed: Option<u64>,
    max_iters: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    let skill = Skill::from_name(skill)?;
    let seed = resolve_seed(seed, 0)?;
    let spec = build_skill(skill);
    require_file(data_path, "dataset")?;
    let data = read_dataset_csv(data_path, &spec)?;
    let mut lbfgs = LBFGSConfig::default();
    if let Some(budget) = max_iters {
        lbfgs.max_iterations = budget;
    }
    let (model, estimates) = identify_parameter(&spec, &data, &lbfgs, seed)?;
    for (name, value) in &estimates {
        println!("estimated {name} = {value:.6}");
    }
    if let Some(path) = out {
        write_model(path, &model)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn plan_cmd(
    cfg: &RunConfig,
    task: &str,
    models: Option<&Path>,
    slow_oracle: bool,
    seed: Option<u64>,
    iterations: Option<usize>,
    arms: Option<usize>,
    trace: bool,
    execute: bool,
) -> Result<()> {
    let task = Task::from_name(task)?;
    let def = cfg.task_def(task);
    let mut planner = cfg.planner();
    if let Some(k) = iterations {
        planner.iterations = k;
    }
    if let Some(d) = arms {
        planner.arms = d;
    }
    planner.seed = resolve_seed(seed, planner.seed)?;

    let set;
    let oracle;
    let predictor: &dyn SkillPredictor = match models {
        Some(dir) => {
            set = load_skill_set(dir, &[task], def.geometry)?;
            &set
        }
        None => {
            let mode = if slow_oracle { OracleMode::Slow } else { OracleMode::Fast };
            oracle = OraclePredictor::new(def.geometry, mode);
            &oracle
        }
    };
    // The GP correction belongs to the adaptive loop; a bare planning run
    // reports the rollouts' own predicted rewards.
    let gp = GPModel::empty(cfg.kernel(), 0.0);
    let outcome = plan_traced(&def, predictor, &gp, &planner)?;
    if trace {
        for row in &outcome.trace {
            println!(
                "iter {:>4}  path {:?}  value {:.6}  best {:.6}",
                row.iteration, row.path, row.value, row.best
            );
        }
    }
    for (dim, value) in def.action_dims.iter().zip(&outcome.best_action) {
        println!("{} = {value:.6}", dim.name);
    }
    println!("predicted reward: {:.6} ({} rollouts)", outcome.phy_reward, outcome.rollouts);
    if execute {
        let (_, reward, _) = execute_action(&def, &outcome.best_action, &cfg.noise());
        println!("executed reward: {reward:.6}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn bench_cmd(
    cfg: &RunConfig,
    tasks: Option<&str>,
    agents: Option<&str>,
    attempts: Option<usize>,
    seeds: Option<Vec<u64>>,
    noise: Option<f64>,
    models: Option<&Path>,
    grid_resolution: Option<usize>,
    out: &Path,
) -> Result<()> {
    let mut exp = cfg.experiment();
    if let Some(text) = tasks {
        exp.tasks = parse_tasks(text)?;
    }
    if let Some(text) = agents {
        exp.agents = parse_agents(text)?;
    }
    if let Some(n) = attempts {
        exp.num_attempts = n;
    }
    if let Some(list) = seeds {
        exp.seeds = list;
    }
    if let Some(sigma) = noise {
        exp.noise.sigma_velocity = sigma;
    }
    if let Some(resolution) = grid_resolution {
        exp.grid_resolution = resolution;
    }

    let set = match (models, cfg.experiment.rollout_backend.as_deref()) {
        (Some(dir), _) => {
            exp.rollout_backend = RolloutBackend::SkillModels;
            Some(load_skill_set(dir, &exp.tasks, exp.geometry)?)
        }
        (None, Some("skill_models")) => {
            return Err(Error::Config(
                "rollout backend skill_models needs --models <dir> holding trained <skill>.bin files".into(),
            ));
        }
        (None, _) => {
            exp.rollout_backend = RolloutBackend::SlowOracle;
            None
        }
    };

    let experiment = run_experiment(&exp, set.as_ref())?;
    experiment.write_csv_path(out)?;
    print!("{}", experiment.summary());
    println!("wrote {} rows to {}", experiment.rows.len(), out.display());
    Ok(())
}

fn grid_opt_cmd(cfg: &RunConfig, task: &str, resolution: Option<usize>) -> Result<()> {
    let task = Task::from_name(task)?;
    let def = cfg.task_def(task);
    let resolution = resolution.unwrap_or_else(|| cfg.experiment().grid_resolution);
    let (action, reward) = grid_optimum_action(&def, resolution);
    for (dim, value) in def.action_dims.iter().zip(&action) {
        println!("{} = {value:.6}", dim.name);
    }
    println!("optimum reward: {reward:.6}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_and_agent_lists_parse() {
        assert_eq!(parse_tasks("all").unwrap(), Task::ALL.to_vec());
        assert_eq!(
            parse_tasks("bounce, slide").unwrap(),
            vec![Task::Bounce, Task::Slide]
        );
        assert!(parse_tasks("bounce,tunnel").is_err());
        assert_eq!(
            parse_agents("phyplan,random").unwrap(),
            vec![Agent::PhyPlan, Agent::Random]
        );
        assert!(parse_agents("dqn").is_err());
    }

    #[test]
    fn explicit_seed_wins() {
        assert_eq!(resolve_seed(Some(5), 0).unwrap(), 5);
    }

    #[test]
    fn contracted_invocations_parse() {
        // The documented command lines must keep parsing exactly as
        // written.
        for argv in [
            "phyplan gen-data --skill throwing --n 1000 --noise 0 --seed 7 --out d.csv",
            "phyplan train --skill sliding --data d.csv --colloc-ratio 4 --seed 42 --out m.bin",
            "phyplan eval --model m.bin --data dval.csv",
            "phyplan bench --tasks all --agents phyplan,random --attempts 20 --seeds 1,2,3,4,5 --out results.csv",
            "phyplan identify --skill sliding --data d.csv --seed 3",
            "phyplan plan --task bounce --trace --execute --seed 1",
            "phyplan grid-opt --task bridge --resolution 50",
        ] {
            if let Err(e) = Cli::try_parse_from(argv.split_whitespace()) {
                panic!("{argv:?} failed to parse: {e}");
            }
        }
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(Cli::try_parse_from(["phyplan", "plan", "--task", "bounce", "--frobnicate"])
            .is_err());
        assert!(Cli::try_parse_from(["phyplan", "warp"]).is_err());
    }

    #[test]
    fn seeds_split_on_commas() {
        let cli = Cli::try_parse_from(
            "phyplan bench --seeds 1,2,3 --out r.csv".split_whitespace(),
        )
        .unwrap();
        match cli.command {
            Command::Bench { seeds, .. } => assert_eq!(seeds.unwrap(), vec![1, 2, 3]),
            _ => unreachable!(),
        }
    }
}
