//! Experiment harness: runs agents across tasks and seeds, collects per
//! attempt rewards, regrets, and planning wall-clock, and emits flat CSV.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adapt::{adaptive_loop, grid_optimum, AdaptConfig, GPKernel, DEFAULT_BETA};
use crate::planner::PlannerConfig;
use crate::skills::SkillSet;
use crate::worldsim::{
    execute_action, Geometry, OracleMode, OraclePredictor, SimNoise, SkillPredictor, Task,
    TaskDef,
};
use crate::{parallel, Error, Result};

/// Seed strides separating experiment-seed streams from attempt streams.
const SEED_STRIDE: u64 = 0xD1B5_4A32_D192_ED03;
const NOISE_STRIDE: u64 = 0x9E37_79B9;

/// The competing policies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Agent {
    /// Planner with the GP-UCB correction refit every attempt.
    PhyPlan,
    /// Planner with the correction disabled.
    PhyPlanNoGp,
    /// Uniform random actions.
    Random,
}

impl Agent {
    pub const ALL: [Agent; 3] = [Agent::PhyPlan, Agent::PhyPlanNoGp, Agent::Random];

    pub fn name(self) -> &'static str {
        match self {
            Agent::PhyPlan => "phyplan",
            Agent::PhyPlanNoGp => "phyplan_no_gp",
            Agent::Random => "random",
        }
    }

    pub fn from_name(name: &str) -> Result<Agent> {
        Agent::ALL
            .into_iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| Error::UnknownName(format!("unknown agent '{name}'")))
    }
}

impl std::fmt::Display for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What evaluates skill queries inside rollouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RolloutBackend {
    /// Trained skill networks.
    SkillModels,
    /// Ground-truth oracle in slow mode, re-integrating the scene state
    /// from zero on every query; the conventional-simulator cost baseline.
    SlowOracle,
}

impl RolloutBackend {
    pub fn name(self) -> &'static str {
        match self {
            RolloutBackend::SkillModels => "skill_models",
            RolloutBackend::SlowOracle => "slow_oracle",
        }
    }

    pub fn from_name(name: &str) -> Result<RolloutBackend> {
        [RolloutBackend::SkillModels, RolloutBackend::SlowOracle]
            .into_iter()
            .find(|b| b.name() == name)
            .ok_or_else(|| Error::UnknownName(format!("unknown rollout backend '{name}'")))
    }
}

/// Full experiment description; the cross product of tasks, agents, and
/// seeds is run.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub tasks: Vec<Task>,
    pub agents: Vec<Agent>,
    pub num_attempts: usize,
    pub seeds: Vec<u64>,
    pub noise: SimNoise,
    pub planner: PlannerConfig,
    pub rollout_backend: RolloutBackend,
    /// Scene constants shared by every task in the run.
    pub geometry: Geometry,
    /// Grid resolution for the regret denominator.
    pub grid_resolution: usize,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            tasks: Task::ALL.to_vec(),
            agents: vec![Agent::PhyPlan, Agent::Random],
            num_attempts: 20,
            seeds: vec![1, 2, 3, 4, 5],
            noise: SimNoise::none(),
            planner: PlannerConfig::default(),
            rollout_backend: RolloutBackend::SkillModels,
            geometry: Geometry::default(),
            grid_resolution: 200,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Config("experiment needs at least one task".into()));
        }
        if self.agents.is_empty() {
            return Err(Error::Config("experiment needs at least one agent".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("experiment needs at least one seed".into()));
        }
        if self.grid_resolution < 2 {
            return Err(Error::Config("grid resolution must be at least 2".into()));
        }
        self.planner.validate()
    }
}

/// One CSV row: a single executed attempt.
#[derive(Clone, Debug, PartialEq)]
pub struct AttemptRow {
    pub task: Task,
    pub agent: Agent,
    pub seed: u64,
    pub attempt: usize,
    pub reward: f64,
    pub best_reward: f64,
    pub regret: f64,
    pub plan_ms: f64,
}

/// Best-so-far regret after each attempt for one (task, agent, seed) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretCurve {
    pub task: Task,
    pub agent: Agent,
    pub seed: u64,
    pub regrets: Vec<f64>,
}

impl RegretCurve {
    /// Builds the curve from per-attempt rewards; regret is computed from
    /// the running best reward.
    pub fn from_rewards(
        task: Task,
        agent: Agent,
        seed: u64,
        rewards: &[f64],
        opt_reward: f64,
    ) -> RegretCurve {
        assert!(opt_reward > 0.0, "regret needs a positive denominator");
        let mut best = 0.0f64;
        let regrets = rewards
            .iter()
            .map(|&r| {
                best = best.max(r);
                (opt_reward - best) / opt_reward
            })
            .collect();
        let curve = RegretCurve { task, agent, seed, regrets };
        curve.assert_non_increasing();
        curve
    }

    fn assert_non_increasing(&self) {
        for pair in self.regrets.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-12,
                "regret curve must be non-increasing: {:?}",
                self.regrets
            );
        }
    }

    pub fn final_regret(&self) -> Option<f64> {
        self.regrets.last().copied()
    }
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub rows: Vec<AttemptRow>,
    pub curves: Vec<RegretCurve>,
    /// Regret denominators, one per task.
    pub opt_rewards: BTreeMap<Task, f64>,
}

impl Experiment {
    /// Writes the flat results CSV with the header
    /// `task,agent,seed,attempt,reward,best_reward,regret,plan_ms`.
    /// Every curve is re-checked for monotonicity before anything is
    /// written.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        for curve in &self.curves {
            curve.assert_non_increasing();
        }
        let as_format = |e: csv::Error| Error::Format(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["task", "agent", "seed", "attempt", "reward", "best_reward", "regret", "plan_ms"])
            .map_err(as_format)?;
        for r in &self.rows {
            w.write_record([
                r.task.name().to_string(),
                r.agent.name().to_string(),
                r.seed.to_string(),
                r.attempt.to_string(),
                r.reward.to_string(),
                r.best_reward.to_string(),
                r.regret.to_string(),
                r.plan_ms.to_string(),
            ])
            .map_err(as_format)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }

    /// Mean final regret and mean planning time per (task, agent), one line
    /// each, as an aligned text table.
    pub fn summary(&self) -> String {
        let mut cells: BTreeMap<(Task, Agent), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for curve in &self.curves {
            if let Some(r) = curve.final_regret() {
                cells.entry((curve.task, curve.agent)).or_default().0.push(r);
            }
        }
        for row in &self.rows {
            cells.entry((row.task, row.agent)).or_default().1.push(row.plan_ms);
        }
        let mut out = String::from("task     agent           mean_final_regret  mean_plan_ms\n");
        for ((task, agent), (regrets, times)) in &cells {
            let mean = |v: &[f64]| {
                if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 }
            };
            out.push_str(&format!(
                "{:<8} {:<15} {:<18.4} {:.2}\n",
                task.name(),
                agent.name(),
                mean(regrets),
                mean(times)
            ));
        }
        out
    }
}

/// Uniform-random baseline: `num_attempts` actions drawn uniformly from the
/// task's bounds and executed under `noise` (seed advanced per attempt).
pub fn run_random(
    task: &TaskDef,
    num_attempts: usize,
    seed: u64,
    noise: &SimNoise,
    opt_reward: f64,
) -> (Vec<f64>, RegretCurve) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rewards: Vec<f64> = (0..num_attempts)
        .map(|attempt| {
            let action: Vec<f64> = task
                .action_dims
                .iter()
                .map(|d| rng.gen_range(d.lo..=d.hi))
                .collect();
            let attempt_noise =
                SimNoise { seed: noise.seed.wrapping_add(attempt as u64), ..*noise };
            execute_action(task, &action, &attempt_noise).1
        })
        .collect();
    let curve = RegretCurve::from_rewards(task.task, Agent::Random, seed, &rewards, opt_reward);
    (rewards, curve)
}

struct Cell {
    task: Task,
    agent: Agent,
    seed: u64,
}

fn run_cell(
    cell: &Cell,
    cfg: &ExperimentConfig,
    skills: Option<&SkillSet>,
    task_def: &TaskDef,
    opt_reward: f64,
) -> Result<(Vec<AttemptRow>, RegretCurve)> {
    let cell_noise = SimNoise {
        seed: cfg.noise.seed.wrapping_add(cell.seed.wrapping_mul(NOISE_STRIDE)),
        ..cfg.noise
    };
    match cell.agent {
        Agent::Random => {
            let (rewards, curve) =
                run_random(task_def, cfg.num_attempts, cell.seed, &cell_noise, opt_reward);
            let mut best = 0.0f64;
            let rows = rewards
                .iter()
                .enumerate()
                .map(|(attempt, &reward)| {
                    best = best.max(reward);
                    AttemptRow {
                        task: cell.task,
                        agent: cell.agent,
                        seed: cell.seed,
                        attempt,
                        reward,
                        best_reward: best,
                        regret: curve.regrets[attempt],
                        plan_ms: 0.0,
                    }
                })
                .collect();
            Ok((rows, curve))
        }
        Agent::PhyPlan | Agent::PhyPlanNoGp => {
            let slow_oracle;
            let models: &dyn SkillPredictor = match cfg.rollout_backend {
                RolloutBackend::SkillModels => skills.ok_or_else(|| {
                    Error::Config("skill_models backend needs trained models".into())
                })?,
                RolloutBackend::SlowOracle => {
                    slow_oracle = OraclePredictor::new(task_def.geometry, OracleMode::Slow);
                    &slow_oracle
                }
            };
            let adapt_cfg = AdaptConfig {
                planner: PlannerConfig {
                    seed: cfg.planner.seed.wrapping_add(cell.seed.wrapping_mul(SEED_STRIDE)),
                    ..cfg.planner
                },
                noise: cell_noise,
                kernel: GPKernel::default(),
                beta: DEFAULT_BETA,
                use_gp: cell.agent == Agent::PhyPlan,
            };
            let (_, log) = adaptive_loop(task_def, models, &adapt_cfg, cfg.num_attempts, opt_reward)?;
            let rows: Vec<AttemptRow> = log
                .records()
                .iter()
                .map(|r| AttemptRow {
                    task: cell.task,
                    agent: cell.agent,
                    seed: cell.seed,
                    attempt: r.attempt,
                    reward: r.reward_sim,
                    best_reward: r.best_reward,
                    regret: r.regret_so_far,
                    plan_ms: r.plan_ms,
                })
                .collect();
            let regrets: Vec<f64> = rows.iter().map(|r| r.regret).collect();
            let curve = RegretCurve { task: cell.task, agent: cell.agent, seed: cell.seed, regrets };
            curve.assert_non_increasing();
            Ok((rows, curve))
        }
    }
}

/// Runs the full cross product of tasks, agents, and seeds. Cells run
/// concurrently; rows keep the configured enumeration order (tasks outer,
/// then agents, then seeds, then attempts).
///
/// `skills` is required for the skill_models backend; every skill in every
/// selected task's chain must be present.
pub fn run_experiment(cfg: &ExperimentConfig, skills: Option<&SkillSet>) -> Result<Experiment> {
    cfg.validate()?;
    if cfg.rollout_backend == RolloutBackend::SkillModels {
        let set = skills.ok_or_else(|| {
            Error::Config("skill_models backend needs trained models".into())
        })?;
        for &task in &cfg.tasks {
            for &skill in &TaskDef::new(task, cfg.geometry).skill_chain {
                set.require(skill)?;
            }
        }
    }

    let mut task_defs: BTreeMap<Task, TaskDef> = BTreeMap::new();
    let mut opt_rewards: BTreeMap<Task, f64> = BTreeMap::new();
    for &task in &cfg.tasks {
        let def = TaskDef::new(task, cfg.geometry);
        opt_rewards.insert(task, grid_optimum(&def, cfg.grid_resolution));
        task_defs.insert(task, def);
    }

    let cells: Vec<Cell> = cfg
        .tasks
        .iter()
        .flat_map(|&task| {
            cfg.agents.iter().flat_map(move |&agent| {
                cfg.seeds.iter().map(move |&seed| Cell { task, agent, seed })
            })
        })
        .collect();

    let results = parallel::map_collect(&cells, |cell| {
        run_cell(cell, cfg, skills, &task_defs[&cell.task], opt_rewards[&cell.task])
    });

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for result in results {
        let (cell_rows, curve) = result?;
        rows.extend(cell_rows);
        curves.push(curve);
    }
    Ok(Experiment { rows, curves, opt_rewards })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ExperimentConfig {
        ExperimentConfig {
            tasks: vec![Task::Bounce],
            agents: vec![Agent::PhyPlan],
            num_attempts: 3,
            seeds: vec![7],
            planner: PlannerConfig {
                arms: 4,
                iterations: 3,
                expansion_threshold: 4,
                ..PlannerConfig::default()
            },
            rollout_backend: RolloutBackend::SlowOracle,
            grid_resolution: 25,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn names_round_trip() {
        for agent in Agent::ALL {
            assert_eq!(Agent::from_name(agent.name()).unwrap(), agent);
        }
        for backend in [RolloutBackend::SkillModels, RolloutBackend::SlowOracle] {
            assert_eq!(RolloutBackend::from_name(backend.name()).unwrap(), backend);
        }
        assert!(Agent::from_name("dqn").is_err());
    }

    #[test]
    fn config_rejects_empty_axes() {
        for cfg in [
            ExperimentConfig { tasks: vec![], ..tiny_cfg() },
            ExperimentConfig { agents: vec![], ..tiny_cfg() },
            ExperimentConfig { seeds: vec![], ..tiny_cfg() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn one_cell_yields_one_row_per_attempt() {
        let exp = run_experiment(&tiny_cfg(), None).unwrap();
        assert_eq!(exp.rows.len(), 3);
        assert_eq!(exp.curves.len(), 1);
        assert_eq!(exp.curves[0].regrets.len(), 3);
        for (attempt, row) in exp.rows.iter().enumerate() {
            assert_eq!(row.attempt, attempt);
            assert!(row.plan_ms > 0.0, "planning time should be measured");
        }
    }

    #[test]
    fn reruns_are_identical_modulo_timing() {
        let cfg = ExperimentConfig {
            agents: vec![Agent::PhyPlan, Agent::Random],
            seeds: vec![1, 2],
            ..tiny_cfg()
        };
        let a = run_experiment(&cfg, None).unwrap();
        let b = run_experiment(&cfg, None).unwrap();
        assert_eq!(a.rows.len(), b.rows.len());
        for (x, y) in a.rows.iter().zip(&b.rows) {
            let strip = |r: &AttemptRow| AttemptRow { plan_ms: 0.0, ..r.clone() };
            assert_eq!(strip(x), strip(y));
        }
        assert_eq!(a.curves, b.curves);
    }

    #[test]
    fn random_baseline_matches_its_contract() {
        let task = TaskDef::standard(Task::Bounce);
        let opt = 0.9;
        let (rewards, curve) = run_random(&task, 1, 3, &SimNoise::none(), opt);
        assert_eq!(rewards.len(), 1);
        assert!((curve.regrets[0] - (opt - rewards[0].max(0.0)) / opt).abs() < 1e-15);

        let (_, long_curve) = run_random(&task, 40, 5, &SimNoise::none(), opt);
        for pair in long_curve.regrets.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn csv_has_the_pinned_header_and_parses_back() {
        let exp = run_experiment(&tiny_cfg(), None).unwrap();
        let mut buf = Vec::new();
        exp.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("task,agent,seed,attempt,reward,best_reward,regret,plan_ms\n"));

        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut parsed = 0;
        for record in reader.records() {
            let record = record.unwrap();
            let row = &exp.rows[parsed];
            assert_eq!(record.get(0).unwrap(), row.task.name());
            assert_eq!(record.get(1).unwrap(), row.agent.name());
            assert_eq!(record.get(4).unwrap().parse::<f64>().unwrap(), row.reward);
            assert_eq!(record.get(6).unwrap().parse::<f64>().unwrap(), row.regret);
            parsed += 1;
        }
        assert_eq!(parsed, exp.rows.len());
    }

    #[test]
    fn skill_models_backend_demands_models() {
        let cfg = ExperimentConfig {
            rollout_backend: RolloutBackend::SkillModels,
            ..tiny_cfg()
        };
        assert!(run_experiment(&cfg, None).is_err());
        let empty = SkillSet::new();
        let err = run_experiment(&cfg, Some(&empty)).unwrap_err();
        let message = err.to_string();
        assert!(
            message.contains("train --skill"),
            "missing-model error should name the fix: {message}"
        );
    }

    #[test]
    fn summary_has_one_line_per_task_agent_pair() {
        let cfg = ExperimentConfig {
            agents: vec![Agent::PhyPlan, Agent::Random],
            ..tiny_cfg()
        };
        let exp = run_experiment(&cfg, None).unwrap();
        let summary = exp.summary();
        assert_eq!(summary.lines().count(), 3, "header plus two agent lines:\n{summary}");
        assert!(summary.contains("phyplan"));
        assert!(summary.contains("random"));
    }
}
