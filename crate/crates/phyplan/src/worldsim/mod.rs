//! Simulated world: task geometry, ground-truth skill oracles, full-action
//! execution with event handling, and dataset generation for skill training.

mod datagen;
mod exec;
mod oracle;

pub use datagen::{generate_dataset, oracle_params, training_bounds};
pub(crate) use exec::goal_reward;
pub use exec::{execute_action, reward_of, write_trajectory_csv, TrajectoryPoint, TRAJ_STEP};
pub use oracle::{oracle_predict, slow_oracle_predict, OracleMode, OraclePredictor, SkillPredictor, RK4_STEP};

use crate::skills::Skill;
use crate::{Error, Result, GRAVITY};

/// What the tracked object is currently doing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    AttachedToPendulum,
    Sliding,
    Airborne,
    Resting,
    InGap,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::AttachedToPendulum => "attached_to_pendulum",
            Phase::Sliding => "sliding",
            Phase::Airborne => "airborne",
            Phase::Resting => "resting",
            Phase::InGap => "in_gap",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Position and velocity of the tracked object plus its motion phase.
/// Axes: x and z horizontal, y up. `Resting` and `InGap` imply zero velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub phase: Phase,
}

impl WorldState {
    pub fn at_rest(position: [f64; 3], phase: Phase) -> Self {
        WorldState { position, velocity: [0.0; 3], phase }
    }
}

/// Disc-shaped goal on a horizontal surface; distance is measured in (x, z).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoalRegion {
    pub center: [f64; 3],
    pub radius: f64,
}

impl GoalRegion {
    /// Horizontal distance from a point to the goal center.
    pub fn distance(&self, position: [f64; 3]) -> f64 {
        let dx = position[0] - self.center[0];
        let dz = position[2] - self.center[2];
        dx.hypot(dz)
    }
}

/// Gaussian velocity perturbation applied at each skill handoff.
/// `sigma_velocity = 0` disables the perturbation entirely.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimNoise {
    pub sigma_velocity: f64,
    pub seed: u64,
}

impl SimNoise {
    pub fn none() -> Self {
        SimNoise { sigma_velocity: 0.0, seed: 0 }
    }

    pub fn new(sigma_velocity: f64, seed: u64) -> Self {
        SimNoise { sigma_velocity, seed }
    }
}

/// The four benchmark tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Task {
    Launch,
    Bounce,
    Slide,
    Bridge,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Launch, Task::Bounce, Task::Slide, Task::Bridge];

    pub fn name(self) -> &'static str {
        match self {
            Task::Launch => "launch",
            Task::Bounce => "bounce",
            Task::Slide => "slide",
            Task::Bridge => "bridge",
        }
    }

    pub fn from_name(name: &str) -> Result<Task> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| Error::UnknownName(format!("unknown task '{name}'")))
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One controllable input of a task, with its legal interval.
/// Angles are in radians, lengths in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionDim {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
}

impl ActionDim {
    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Fixed physical constants of the scene. Fields not used by a given task
/// are simply ignored by it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    /// Height of the table surface above the ground.
    pub table_height: f64,
    /// Radius of every goal disc.
    pub goal_radius: f64,
    /// Pendulum rod length.
    pub pendulum_length: f64,
    /// Pendulum bob mass (the striker in hit chains).
    pub m1: f64,
    /// Puck mass (the struck object).
    pub m2: f64,
    /// Sliding friction coefficient of the table and bridge.
    pub mu: f64,
    /// Wedge restitution for bounces.
    pub e: f64,
    /// Restitution of the pendulum-puck collision.
    pub e_c: f64,
    /// Height of the wedge contact point above the ground (bounce task).
    pub wedge_height: f64,
    /// Height of the pendulum pivot above the ground (launch task).
    pub launch_pivot_height: f64,
    /// Near edge of the table gap, measured from the puck start (bridge task).
    pub gap_start: f64,
    /// Width of the gap.
    pub gap_width: f64,
    /// Length of the movable bridge plank.
    pub bridge_length: f64,
    /// Distance from the puck start to the table edge (bridge task).
    pub table_edge: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            table_height: 0.5,
            goal_radius: 0.08,
            pendulum_length: 0.5,
            m1: 0.1,
            m2: 0.1,
            mu: 0.2,
            e: 0.8,
            e_c: 0.9,
            wedge_height: 0.3,
            launch_pivot_height: 1.0,
            gap_start: 0.4,
            gap_width: 0.2,
            bridge_length: 0.3,
            table_edge: 0.8,
        }
    }
}

impl Geometry {
    /// Speed transferred to the puck when the pendulum bob hits it at `v`.
    pub fn struck_speed(&self, v: f64) -> f64 {
        (1.0 + self.e_c) * self.m1 * v / (self.m1 + self.m2)
    }

    /// True when the bridge plank centered at `x_b` spans the whole gap.
    /// A nanometer of slack keeps boundary placements from flapping on
    /// rounding.
    pub fn bridge_covers_gap(&self, x_b: f64) -> bool {
        const SLACK: f64 = 1e-9;
        let half = self.bridge_length / 2.0;
        x_b - half <= self.gap_start + SLACK
            && x_b + half >= self.gap_start + self.gap_width - SLACK
    }
}

/// Full description of one task instance: which skills it chains, what the
/// agent controls, the scene constants, and the goal.
#[derive(Clone, Debug)]
pub struct TaskDef {
    pub task: Task,
    pub skill_chain: Vec<Skill>,
    pub action_dims: Vec<ActionDim>,
    pub geometry: Geometry,
    pub goal: GoalRegion,
    /// Initial object-to-goal distance; rewards decay linearly over it.
    pub d_ref: f64,
}

/// Swing release angle bounds shared by the pendulum tasks, radians.
pub const THETA_REL_LO: f64 = 5.0 * std::f64::consts::PI / 180.0;
pub const THETA_REL_HI: f64 = 85.0 * std::f64::consts::PI / 180.0;
/// Horizontal aim azimuth bounds, radians.
pub const PHI_LO: f64 = -45.0 * std::f64::consts::PI / 180.0;
pub const PHI_HI: f64 = 45.0 * std::f64::consts::PI / 180.0;
/// Drop height bounds for the bounce task, meters above the wedge.
pub const DROP_LO: f64 = 0.2;
pub const DROP_HI: f64 = 1.5;
/// Wedge tilt bounds, radians from horizontal.
pub const THETA_W_LO: f64 = 15.0 * std::f64::consts::PI / 180.0;
pub const THETA_W_HI: f64 = 75.0 * std::f64::consts::PI / 180.0;

impl TaskDef {
    /// Builds a task with its standard goal placement for the given scene.
    pub fn new(task: Task, geometry: Geometry) -> TaskDef {
        let radius = geometry.goal_radius;
        match task {
            Task::Launch => {
                // Ball released at the bottom of the swing flies to the ground.
                let goal = GoalRegion { center: [0.6, 0.0, 0.2], radius };
                let start = [0.0, geometry.launch_pivot_height - geometry.pendulum_length, 0.0];
                TaskDef {
                    task,
                    skill_chain: vec![Skill::Swinging, Skill::Throwing],
                    action_dims: vec![
                        ActionDim { name: "theta_rel", lo: THETA_REL_LO, hi: THETA_REL_HI },
                        ActionDim { name: "phi", lo: PHI_LO, hi: PHI_HI },
                    ],
                    geometry,
                    goal,
                    d_ref: goal.distance(start),
                }
            }
            Task::Bounce => {
                // Ball dropped onto the wedge rebounds toward negative x.
                let goal = GoalRegion { center: [-1.0, 0.0, 0.0], radius };
                let start = [0.0, geometry.wedge_height, 0.0];
                TaskDef {
                    task,
                    skill_chain: vec![Skill::Throwing, Skill::Bouncing, Skill::Throwing],
                    action_dims: vec![
                        ActionDim { name: "drop_height", lo: DROP_LO, hi: DROP_HI },
                        ActionDim { name: "theta_w", lo: THETA_W_LO, hi: THETA_W_HI },
                    ],
                    geometry,
                    goal,
                    d_ref: goal.distance(start),
                }
            }
            Task::Slide => {
                // Struck puck slides on the table toward a goal disc on it.
                let goal =
                    GoalRegion { center: [0.7, geometry.table_height, 0.25], radius };
                let start = [0.0, geometry.table_height, 0.0];
                TaskDef {
                    task,
                    skill_chain: vec![Skill::Swinging, Skill::Hitting, Skill::Sliding],
                    action_dims: vec![
                        ActionDim { name: "theta_rel", lo: THETA_REL_LO, hi: THETA_REL_HI },
                        ActionDim { name: "phi", lo: PHI_LO, hi: PHI_HI },
                    ],
                    geometry,
                    goal,
                    d_ref: goal.distance(start),
                }
            }
            Task::Bridge => {
                // Puck crosses a bridged gap, leaves the table edge, and
                // lands on the ground goal.
                let goal = GoalRegion { center: [1.0, 0.0, 0.0], radius };
                let start = [0.0, geometry.table_height, 0.0];
                TaskDef {
                    task,
                    skill_chain: vec![
                        Skill::Swinging,
                        Skill::Hitting,
                        Skill::Sliding,
                        Skill::Throwing,
                    ],
                    action_dims: vec![
                        ActionDim { name: "theta_rel", lo: THETA_REL_LO, hi: THETA_REL_HI },
                        ActionDim { name: "bridge_x", lo: 0.0, hi: geometry.table_edge },
                    ],
                    geometry,
                    goal,
                    d_ref: goal.distance(start),
                }
            }
        }
    }

    /// Standard task with the default scene.
    pub fn standard(task: Task) -> TaskDef {
        TaskDef::new(task, Geometry::default())
    }

    /// Object position before any action.
    pub fn start(&self) -> [f64; 3] {
        let g = &self.geometry;
        match self.task {
            Task::Launch => [0.0, g.launch_pivot_height - g.pendulum_length, 0.0],
            Task::Bounce => [0.0, g.wedge_height, 0.0],
            Task::Slide | Task::Bridge => [0.0, g.table_height, 0.0],
        }
    }

    /// Replaces the goal, recomputing the reward's distance normalizer from
    /// the start position.
    pub fn with_goal(mut self, goal: GoalRegion) -> TaskDef {
        self.d_ref = goal.distance(self.start());
        self.goal = goal;
        self
    }

    /// Clamps an action into the legal box, warning when a component moves.
    pub fn clamp_action(&self, action: &[f64]) -> Vec<f64> {
        assert_eq!(
            action.len(),
            self.action_dims.len(),
            "action has {} components, task '{}' takes {}",
            action.len(),
            self.task,
            self.action_dims.len()
        );
        self.action_dims
            .iter()
            .zip(action)
            .map(|(dim, &v)| {
                let c = dim.clamp(v);
                if c != v {
                    log::warn!(
                        "action component {} = {v} outside [{}, {}], clamped to {c}",
                        dim.name,
                        dim.lo,
                        dim.hi
                    );
                }
                c
            })
            .collect()
    }

    /// Pendulum bob speed at the bottom of a swing released from rest
    /// at angle `theta_rel`.
    pub fn swing_bottom_speed(&self, theta_rel: f64) -> f64 {
        (2.0 * GRAVITY * self.geometry.pendulum_length * (1.0 - theta_rel.cos())).sqrt()
    }
}
