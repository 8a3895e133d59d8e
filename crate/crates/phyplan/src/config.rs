//! Run configuration: one TOML file covering scene geometry, planner and
//! noise settings, GP hyperparameters, and experiment axes, plus optional
//! per-task goal overrides. Every key is optional and absent keys keep the
//! built-in defaults, so an empty file is a valid configuration. The full
//! schema ships as `phyplan.example.toml` at the repository root.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::adapt::{AdaptConfig, GPKernel, DEFAULT_BETA};
use crate::bench::{Agent, ExperimentConfig, RolloutBackend};
use crate::planner::PlannerConfig;
use crate::worldsim::{Geometry, GoalRegion, SimNoise, Task, TaskDef};
use crate::{Error, Result};

/// Parsed configuration file. Unknown keys are rejected so typos fail
/// loudly instead of silently keeping a default.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub planner: PlannerSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub gp: GpSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    /// Goal overrides keyed by task name.
    #[serde(default)]
    pub tasks: BTreeMap<String, TaskSection>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub table_height: Option<f64>,
    pub goal_radius: Option<f64>,
    pub pendulum_length: Option<f64>,
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub mu: Option<f64>,
    pub e: Option<f64>,
    pub e_c: Option<f64>,
    pub wedge_height: Option<f64>,
    pub launch_pivot_height: Option<f64>,
    pub gap_start: Option<f64>,
    pub gap_width: Option<f64>,
    pub bridge_length: Option<f64>,
    pub table_edge: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    pub arms: Option<usize>,
    pub iterations: Option<usize>,
    pub alpha: Option<f64>,
    pub expansion_threshold: Option<usize>,
    pub t_query_step: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma_velocity: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpSection {
    pub lengthscale: Option<f64>,
    pub signal_variance: Option<f64>,
    pub noise_variance: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub tasks: Option<Vec<String>>,
    pub agents: Option<Vec<String>>,
    pub num_attempts: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub rollout_backend: Option<String>,
    pub grid_resolution: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub goal_center: Option<[f64; 3]>,
    pub goal_radius: Option<f64>,
}

impl RunConfig {
    /// Parses TOML text; reports the parser's message (with position) on
    /// malformed input and validates the resolved values.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        for name in self.tasks.keys() {
            Task::from_name(name)?;
        }
        self.planner().validate()?;
        self.kernel().validate()?;
        if let Some(section) = self.experiment.tasks.as_deref() {
            for name in section {
                Task::from_name(name)?;
            }
        }
        if let Some(section) = self.experiment.agents.as_deref() {
            for name in section {
                Agent::from_name(name)?;
            }
        }
        if let Some(name) = self.experiment.rollout_backend.as_deref() {
            RolloutBackend::from_name(name)?;
        }
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        let d = Geometry::default();
        let s = &self.geometry;
        Geometry {
            table_height: s.table_height.unwrap_or(d.table_height),
            goal_radius: s.goal_radius.unwrap_or(d.goal_radius),
            pendulum_length: s.pendulum_length.unwrap_or(d.pendulum_length),
            m1: s.m1.unwrap_or(d.m1),
            m2: s.m2.unwrap_or(d.m2),
            mu: s.mu.unwrap_or(d.mu),
            e: s.e.unwrap_or(d.e),
            e_c: s.e_c.unwrap_or(d.e_c),
            wedge_height: s.wedge_height.unwrap_or(d.wedge_height),
            launch_pivot_height: s.launch_pivot_height.unwrap_or(d.launch_pivot_height),
            gap_start: s.gap_start.unwrap_or(d.gap_start),
            gap_width: s.gap_width.unwrap_or(d.gap_width),
            bridge_length: s.bridge_length.unwrap_or(d.bridge_length),
            table_edge: s.table_edge.unwrap_or(d.table_edge),
        }
    }

    pub fn planner(&self) -> PlannerConfig {
        let d = PlannerConfig::default();
        let s = &self.planner;
        PlannerConfig {
            arms: s.arms.unwrap_or(d.arms),
            iterations: s.iterations.unwrap_or(d.iterations),
            alpha: s.alpha.unwrap_or(d.alpha),
            expansion_threshold: s.expansion_threshold.unwrap_or(d.expansion_threshold),
            t_query_step: s.t_query_step.unwrap_or(d.t_query_step),
            seed: s.seed.unwrap_or(d.seed),
        }
    }

    pub fn noise(&self) -> SimNoise {
        SimNoise {
            sigma_velocity: self.noise.sigma_velocity.unwrap_or(0.0),
            seed: self.noise.seed.unwrap_or(0),
        }
    }

    pub fn kernel(&self) -> GPKernel {
        let d = GPKernel::default();
        let s = &self.gp;
        GPKernel {
            lengthscale: s.lengthscale.unwrap_or(d.lengthscale),
            signal_variance: s.signal_variance.unwrap_or(d.signal_variance),
            noise_variance: s.noise_variance.unwrap_or(d.noise_variance),
        }
    }

    pub fn beta(&self) -> f64 {
        self.gp.beta.unwrap_or(DEFAULT_BETA)
    }

    /// Assembles the adaptation settings for one agent flavor.
    pub fn adapt(&self, use_gp: bool) -> AdaptConfig {
        AdaptConfig {
            planner: self.planner(),
            noise: self.noise(),
            kernel: self.kernel(),
            beta: self.beta(),
            use_gp,
        }
    }

    /// Task with this configuration's scene and any goal override applied.
    pub fn task_def(&self, task: Task) -> TaskDef {
        let def = TaskDef::new(task, self.geometry());
        match self.tasks.get(task.name()) {
            None => def,
            Some(section) => {
                let base = def.goal;
                def.with_goal(GoalRegion {
                    center: section.goal_center.unwrap_or(base.center),
                    radius: section.goal_radius.unwrap_or(base.radius),
                })
            }
        }
    }

    /// Experiment axes with names resolved; validation has already checked
    /// them, so resolution cannot fail here.
    pub fn experiment(&self) -> ExperimentConfig {
        let d = ExperimentConfig::default();
        let s = &self.experiment;
        let parse_all = |names: &[String]| {
            names.iter().map(|n| Task::from_name(n).expect("validated")).collect()
        };
        ExperimentConfig {
            tasks: s.tasks.as_deref().map_or(d.tasks, |names| parse_all(names)),
            agents: s.agents.as_deref().map_or(d.agents, |names| {
                names.iter().map(|n| Agent::from_name(n).expect("validated")).collect()
            }),
            num_attempts: s.num_attempts.unwrap_or(d.num_attempts),
            seeds: s.seeds.clone().unwrap_or(d.seeds),
            noise: self.noise(),
            planner: self.planner(),
            rollout_backend: s
                .rollout_backend
                .as_deref()
                .map_or(d.rollout_backend, |n| {
                    RolloutBackend::from_name(n).expect("validated")
                }),
            geometry: self.geometry(),
            grid_resolution: s.grid_resolution.unwrap_or(d.grid_resolution),
        }
    }
}
