//! Adaptive task reasoning: plan, execute, measure the reward error, and
//! fold it back into the next plan through a GP-UCB correction.

mod gp;

pub use gp::{gp_fit, gp_posterior, ucb_correct, GPKernel, GPModel, DEFAULT_BETA};

use std::io::Write;
use std::path::Path;

use crate::planner::{chain_rollout, normalize_action, plan, PlannerConfig};
use crate::worldsim::{execute_action, SimNoise, SkillPredictor, TaskDef};
use crate::{parallel, Error, Result};

/// Seed stride separating per-attempt planner streams.
const ATTEMPT_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Knobs of the adaptive loop. `use_gp = false` plans with a permanently
/// empty zero-beta GP, so rollout values carry no correction at all.
#[derive(Clone, Copy, Debug)]
pub struct AdaptConfig {
    pub planner: PlannerConfig,
    pub noise: SimNoise,
    pub kernel: GPKernel,
    pub beta: f64,
    pub use_gp: bool,
}

impl Default for AdaptConfig {
    fn default() -> AdaptConfig {
        AdaptConfig {
            planner: PlannerConfig::default(),
            noise: SimNoise::none(),
            kernel: GPKernel::default(),
            beta: DEFAULT_BETA,
            use_gp: true,
        }
    }
}

/// What one attempt produced.
#[derive(Clone, Debug, PartialEq)]
pub struct AttemptRecord {
    pub attempt: usize,
    pub action: Vec<f64>,
    /// Planner's corrected value of the chosen action.
    pub phy_reward: f64,
    /// Reward the simulator actually paid.
    pub reward_sim: f64,
    /// Running max of simulator rewards.
    pub best_reward: f64,
    pub regret_so_far: f64,
    /// Wall-clock spent inside plan(), milliseconds; excludes execution.
    pub plan_ms: f64,
}

/// Per-attempt history of one adaptive run.
#[derive(Clone, Debug)]
pub struct AttemptLog {
    action_names: Vec<String>,
    records: Vec<AttemptRecord>,
}

impl AttemptLog {
    pub fn new(task: &TaskDef) -> AttemptLog {
        AttemptLog {
            action_names: task.action_dims.iter().map(|d| d.name.to_string()).collect(),
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[AttemptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(&mut self, record: AttemptRecord) {
        if let Some(last) = self.records.last() {
            assert!(
                record.best_reward >= last.best_reward,
                "best_reward is a running max"
            );
        }
        assert_eq!(record.action.len(), self.action_names.len());
        self.records.push(record);
    }

    /// Writes the log as CSV: attempt, the named action components, then
    /// phy_reward, reward_sim, best_reward, regret_so_far.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let as_format = |e: csv::Error| Error::Format(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["attempt".to_string()];
        header.extend(self.action_names.iter().cloned());
        header.extend(
            ["phy_reward", "reward_sim", "best_reward", "regret_so_far"].map(String::from),
        );
        w.write_record(&header).map_err(as_format)?;
        for r in &self.records {
            let mut row = vec![r.attempt.to_string()];
            row.extend(r.action.iter().map(|v| v.to_string()));
            row.push(r.phy_reward.to_string());
            row.push(r.reward_sim.to_string());
            row.push(r.best_reward.to_string());
            row.push(r.regret_so_far.to_string());
            w.write_record(&row).map_err(as_format)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }
}

/// Runs `num_attempts` rounds of plan → execute → refit. Each round refits
/// the GP on all accumulated (action, reward_sim − raw rollout reward)
/// pairs, so it models the skill models' own error, free of the correction
/// and optimism the planner layered on top. It then plans with the
/// refreshed correction, executes the chosen action in the simulator, and
/// tracks the best simulator reward. Returns the final regret
/// `(opt_reward − best_reward) / opt_reward` and the per-attempt log.
///
/// With zero attempts the regret is 1: best_reward starts at 0.
pub fn adaptive_loop(
    task: &TaskDef,
    models: &dyn SkillPredictor,
    cfg: &AdaptConfig,
    num_attempts: usize,
    opt_reward: f64,
) -> Result<(f64, AttemptLog)> {
    if !(opt_reward > 0.0 && opt_reward.is_finite()) {
        return Err(Error::Config(format!(
            "opt_reward must be positive and finite, got {opt_reward}"
        )));
    }
    cfg.planner.validate()?;

    let mut log = AttemptLog::new(task);
    let mut actions: Vec<Vec<f64>> = Vec::new();
    let mut residuals: Vec<f64> = Vec::new();
    let mut gp = GPModel::empty(cfg.kernel, if cfg.use_gp { cfg.beta } else { 0.0 });
    let mut best_reward = 0.0f64;

    for attempt in 0..num_attempts {
        if cfg.use_gp {
            gp = gp_fit(&gp, actions.clone(), residuals.clone())?;
        }
        let planner = PlannerConfig {
            seed: cfg
                .planner
                .seed
                .wrapping_add((attempt as u64).wrapping_mul(ATTEMPT_SEED_STRIDE)),
            ..cfg.planner
        };
        let planning_started = std::time::Instant::now();
        let (action, phy_reward) = plan(task, models, &gp, &planner)?;
        let plan_ms = planning_started.elapsed().as_secs_f64() * 1e3;
        let noise = SimNoise { seed: cfg.noise.seed.wrapping_add(attempt as u64), ..cfg.noise };
        let (_, reward_sim, _) = execute_action(task, &action, &noise);
        best_reward = best_reward.max(reward_sim);
        let (raw_reward, _) = chain_rollout(task, models, cfg.planner.t_query_step, &action);
        actions.push(normalize_action(task, &action));
        residuals.push(reward_sim - raw_reward);
        log.push(AttemptRecord {
            attempt,
            action,
            phy_reward,
            reward_sim,
            best_reward,
            regret_so_far: (opt_reward - best_reward) / opt_reward,
            plan_ms,
        });
    }

    Ok(((opt_reward - best_reward) / opt_reward, log))
}

/// Best grid action and its reward: exhaustive noise-free evaluation over a
/// uniform grid with `resolution` points per dimension, endpoints included.
/// Ties prefer the lowest flattened index (first dimension varying fastest).
pub fn grid_optimum_action(task: &TaskDef, resolution: usize) -> (Vec<f64>, f64) {
    assert!(resolution >= 2, "grid needs both endpoints per dimension");
    let dims = &task.action_dims;
    let total = resolution
        .checked_pow(dims.len() as u32)
        .expect("grid size overflows usize");
    let action_at = |mut i: usize| -> Vec<f64> {
        dims.iter()
            .map(|d| {
                let j = i % resolution;
                i /= resolution;
                d.lo + d.width() * j as f64 / (resolution - 1) as f64
            })
            .collect()
    };
    let (best, reward) = parallel::argmax_by_index(total, 32, |i| {
        execute_action(task, &action_at(i), &SimNoise::none()).1
    })
    .expect("grid is non-empty");
    (action_at(best), reward)
}

/// Reward of the best grid action; the regret denominator.
pub fn grid_optimum(task: &TaskDef, resolution: usize) -> f64 {
    grid_optimum_action(task, resolution).1
}
