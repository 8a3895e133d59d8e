//! Ground-truth task execution: runs a full action through its skill chain
//! with exact event handling, records a trajectory, and scores the outcome.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::worldsim::oracle::RK4_STEP;
use crate::worldsim::{Geometry, GoalRegion, Phase, SimNoise, Task, TaskDef, WorldState};
use crate::{Result, GRAVITY};

/// Interval between recorded trajectory samples, seconds.
pub const TRAJ_STEP: f64 = 0.01;

/// One timed sample of the tracked object.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub state: WorldState,
}

/// Reward for a finished episode: 1 inside the goal disc, then a linear
/// falloff over the initial object-to-goal distance.
pub fn reward_of(task: &TaskDef, final_state: &WorldState) -> f64 {
    assert!(
        matches!(final_state.phase, Phase::Resting | Phase::InGap),
        "reward is defined for settled objects, got phase {}",
        final_state.phase
    );
    goal_reward(&task.goal, task.d_ref, final_state.position)
}

pub(crate) fn goal_reward(goal: &GoalRegion, d_ref: f64, position: [f64; 3]) -> f64 {
    let d = goal.distance(position);
    if d <= goal.radius {
        1.0
    } else {
        (1.0 - d / d_ref).max(0.0)
    }
}

struct NoiseStream {
    rng: Option<(ChaCha8Rng, Normal<f64>)>,
}

impl NoiseStream {
    fn new(noise: &SimNoise) -> Self {
        let rng = (noise.sigma_velocity > 0.0).then(|| {
            (
                ChaCha8Rng::seed_from_u64(noise.seed),
                Normal::new(0.0, noise.sigma_velocity).expect("sigma checked positive"),
            )
        });
        NoiseStream { rng }
    }

    /// Perturbs a handed-off velocity. On-table handoffs keep the object in
    /// the surface plane, so only the horizontal components are free there.
    fn perturb(&mut self, v: &mut [f64; 3], horizontal_only: bool) {
        if let Some((rng, dist)) = &mut self.rng {
            v[0] += dist.sample(rng);
            if !horizontal_only {
                v[1] += dist.sample(rng);
            }
            v[2] += dist.sample(rng);
        }
    }
}

fn record(traj: &mut Vec<TrajectoryPoint>, t: f64, state: WorldState) {
    traj.push(TrajectoryPoint { t, state });
}

/// Integrates the pendulum from rest until the rod first passes the vertical,
/// recording bob samples. The bob is raised on the side opposite the aim
/// direction `u`, so it crosses the bottom moving along `+u`.
/// Returns (crossing time, bob speed at the bottom).
fn swing_segment(
    theta_rel: f64,
    l: f64,
    pivot: [f64; 3],
    u: [f64; 2],
    t0: f64,
    traj: &mut Vec<TrajectoryPoint>,
) -> (f64, f64) {
    assert!(theta_rel > 0.0, "release angle must be positive");
    let bob_state = |theta: f64, omega: f64| WorldState {
        position: [
            pivot[0] - l * theta.sin() * u[0],
            pivot[1] - l * theta.cos(),
            pivot[2] - l * theta.sin() * u[1],
        ],
        velocity: [
            -l * omega * theta.cos() * u[0],
            l * omega * theta.sin(),
            -l * omega * theta.cos() * u[1],
        ],
        phase: Phase::AttachedToPendulum,
    };
    record(traj, t0, bob_state(theta_rel, 0.0));

    let f = |theta: f64, omega: f64| (omega, -(GRAVITY / l) * theta.sin());
    let (mut theta, mut omega) = (theta_rel, 0.0);
    let mut step = 0usize;
    let steps_per_sample = (TRAJ_STEP / RK4_STEP).round() as usize;
    // A quarter period is well under a second for bench-scale pendulums.
    let max_steps = (10.0 / RK4_STEP) as usize;
    loop {
        let k1 = f(theta, omega);
        let k2 = f(theta + 0.5 * RK4_STEP * k1.0, omega + 0.5 * RK4_STEP * k1.1);
        let k3 = f(theta + 0.5 * RK4_STEP * k2.0, omega + 0.5 * RK4_STEP * k2.1);
        let k4 = f(theta + RK4_STEP * k3.0, omega + RK4_STEP * k3.1);
        let next_theta = theta + RK4_STEP / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        let next_omega = omega + RK4_STEP / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        step += 1;
        if next_theta <= 0.0 {
            // Omega is at its extremum here, so linear interpolation in the
            // crossing step is accurate to O(h^2).
            let alpha = theta / (theta - next_theta);
            let t_cross = t0 + ((step - 1) as f64 + alpha) * RK4_STEP;
            let omega_cross = omega + alpha * (next_omega - omega);
            return (t_cross, (l * omega_cross).abs());
        }
        theta = next_theta;
        omega = next_omega;
        if step % steps_per_sample == 0 {
            record(traj, t0 + step as f64 * RK4_STEP, bob_state(theta, omega));
        }
        assert!(step < max_steps, "pendulum never crossed the vertical");
    }
}

/// Ballistic flight from `start` until the object descends to `y_target`.
/// Returns (landing time, landing position, landing velocity).
fn flight_segment(
    start: [f64; 3],
    vel: [f64; 3],
    y_target: f64,
    t0: f64,
    traj: &mut Vec<TrajectoryPoint>,
) -> (f64, [f64; 3], [f64; 3]) {
    let at = |tau: f64| WorldState {
        position: [
            start[0] + vel[0] * tau,
            start[1] + vel[1] * tau - 0.5 * GRAVITY * tau * tau,
            start[2] + vel[2] * tau,
        ],
        velocity: [vel[0], vel[1] - GRAVITY * tau, vel[2]],
        phase: Phase::Airborne,
    };
    let disc = vel[1] * vel[1] + 2.0 * GRAVITY * (start[1] - y_target);
    assert!(disc >= 0.0, "flight target plane is unreachable");
    let tau_land = (vel[1] + disc.sqrt()) / GRAVITY;

    record(traj, t0, at(0.0));
    let mut tau = TRAJ_STEP;
    while tau < tau_land {
        record(traj, t0 + tau, at(tau));
        tau += TRAJ_STEP;
    }
    let end = at(tau_land);
    record(traj, t0 + tau_land, end);
    (t0 + tau_land, end.position, end.velocity)
}

enum SlideOutcome {
    /// Friction consumed the momentum after `t` at `pos`.
    Stopped { t: f64, pos: [f64; 3] },
    /// The threshold arc length was reached first, at this speed.
    Reached { t: f64, pos: [f64; 3], speed: f64 },
}

/// Frictional slide along horizontal unit direction `u` on the surface
/// containing `start`, optionally cut short at arc length `stop_at_arc`.
fn slide_segment(
    start: [f64; 3],
    u: [f64; 2],
    speed: f64,
    mu: f64,
    stop_at_arc: Option<f64>,
    t0: f64,
    traj: &mut Vec<TrajectoryPoint>,
) -> SlideOutcome {
    assert!(mu > 0.0, "a frictionless slide never settles");
    assert!(speed > 0.0, "slide entered with no speed");
    let decel = mu * GRAVITY;
    let at = |tau: f64| {
        let s = speed * tau - 0.5 * decel * tau * tau;
        let v = speed - decel * tau;
        WorldState {
            position: [start[0] + s * u[0], start[1], start[2] + s * u[1]],
            velocity: [v * u[0], 0.0, v * u[1]],
            phase: Phase::Sliding,
        }
    };
    let tau_stop = speed / decel;
    let s_stop = speed * speed / (2.0 * decel);
    let cut = stop_at_arc.filter(|&s_ev| s_ev < s_stop).map(|s_ev| {
        let v_ev = (speed * speed - 2.0 * decel * s_ev).sqrt();
        ((speed - v_ev) / decel, v_ev)
    });
    let tau_end = cut.map_or(tau_stop, |(tau_ev, _)| tau_ev);

    record(traj, t0, at(0.0));
    let mut tau = TRAJ_STEP;
    while tau < tau_end {
        record(traj, t0 + tau, at(tau));
        tau += TRAJ_STEP;
    }
    let end = at(tau_end);
    record(traj, t0 + tau_end, end);
    match cut {
        Some((_, v_ev)) => SlideOutcome::Reached { t: t0 + tau_end, pos: end.position, speed: v_ev },
        None => SlideOutcome::Stopped { t: t0 + tau_end, pos: end.position },
    }
}

fn settle(
    traj: &mut Vec<TrajectoryPoint>,
    t: f64,
    pos: [f64; 3],
    phase: Phase,
) -> WorldState {
    let state = WorldState::at_rest(pos, phase);
    record(traj, t, state);
    state
}

fn horizontal_dir(v: [f64; 3]) -> ([f64; 2], f64) {
    let speed = v[0].hypot(v[2]);
    if speed > 0.0 {
        ([v[0] / speed, v[2] / speed], speed)
    } else {
        ([1.0, 0.0], 0.0)
    }
}

/// Runs a complete episode of `task` under `action`, perturbing each skill
/// handoff per `noise`. Components outside the action bounds are clamped
/// with a warning. Returns the settled state, its reward, and the recorded
/// trajectory.
pub fn execute_action(
    task: &TaskDef,
    action: &[f64],
    noise: &SimNoise,
) -> (WorldState, f64, Vec<TrajectoryPoint>) {
    let a = task.clamp_action(action);
    let mut ns = NoiseStream::new(noise);
    let mut traj = Vec::new();
    let g = task.geometry;

    let final_state = match task.task {
        Task::Launch => {
            let (theta_rel, phi) = (a[0], a[1]);
            let u = [phi.cos(), phi.sin()];
            let pivot = [0.0, g.launch_pivot_height, 0.0];
            let (t_rel, speed) = swing_segment(
                theta_rel,
                g.pendulum_length,
                pivot,
                u,
                0.0,
                &mut traj,
            );
            let mut vel = [speed * u[0], 0.0, speed * u[1]];
            ns.perturb(&mut vel, false);
            let release = [0.0, g.launch_pivot_height - g.pendulum_length, 0.0];
            let (t_land, land, _) = flight_segment(release, vel, 0.0, t_rel, &mut traj);
            settle(&mut traj, t_land, land, Phase::Resting)
        }
        Task::Bounce => {
            let (h, theta_w) = (a[0], a[1]);
            let top = [0.0, g.wedge_height + h, 0.0];
            let (t_hit, contact, contact_vel) =
                flight_segment(top, [0.0; 3], g.wedge_height, 0.0, &mut traj);
            let mut incoming = contact_vel;
            ns.perturb(&mut incoming, false);
            // Reflect about the wedge normal; the normal leans toward -x so
            // a vertical drop rebounds that way. The z component is
            // tangential and passes through.
            let n = [-theta_w.sin(), theta_w.cos(), 0.0];
            let vn = incoming[0] * n[0] + incoming[1] * n[1];
            let mut out = [
                incoming[0] - (1.0 + g.e) * vn * n[0],
                incoming[1] - (1.0 + g.e) * vn * n[1],
                incoming[2],
            ];
            ns.perturb(&mut out, false);
            let (t_land, land, _) = flight_segment(contact, out, 0.0, t_hit, &mut traj);
            settle(&mut traj, t_land, land, Phase::Resting)
        }
        Task::Slide => {
            let (theta_rel, phi) = (a[0], a[1]);
            let u = [phi.cos(), phi.sin()];
            let pivot = [0.0, g.table_height + g.pendulum_length, 0.0];
            let (t_hit, speed) =
                swing_segment(theta_rel, g.pendulum_length, pivot, u, 0.0, &mut traj);
            let mut bob_vel = [speed * u[0], 0.0, speed * u[1]];
            ns.perturb(&mut bob_vel, false);
            let (dir, bob_speed) = horizontal_dir(bob_vel);
            let mut puck_vel = {
                let s = g.struck_speed(bob_speed);
                [s * dir[0], 0.0, s * dir[1]]
            };
            ns.perturb(&mut puck_vel, true);
            let (dir, puck_speed) = horizontal_dir(puck_vel);
            let start = [0.0, g.table_height, 0.0];
            match slide_segment(start, dir, puck_speed, g.mu, None, t_hit, &mut traj) {
                SlideOutcome::Stopped { t, pos } => settle(&mut traj, t, pos, Phase::Resting),
                SlideOutcome::Reached { .. } => unreachable!("slide has no cut threshold"),
            }
        }
        Task::Bridge => {
            let (theta_rel, bridge_x) = (a[0], a[1]);
            let u = [1.0, 0.0];
            let pivot = [0.0, g.table_height + g.pendulum_length, 0.0];
            let (t_hit, speed) =
                swing_segment(theta_rel, g.pendulum_length, pivot, u, 0.0, &mut traj);
            let mut bob_vel = [speed, 0.0, 0.0];
            ns.perturb(&mut bob_vel, false);
            let (dir, bob_speed) = horizontal_dir(bob_vel);
            let mut puck_vel = {
                let s = g.struck_speed(bob_speed);
                [s * dir[0], 0.0, s * dir[1]]
            };
            ns.perturb(&mut puck_vel, true);
            let (dir, puck_speed) = horizontal_dir(puck_vel);
            let covered = g.bridge_covers_gap(bridge_x);
            // Progress toward the gap and edge is measured along x.
            let arc_to = |x: f64| (dir[0] > 0.0).then(|| x / dir[0]);
            let threshold = if covered { arc_to(g.table_edge) } else { arc_to(g.gap_start) };
            let start = [0.0, g.table_height, 0.0];
            match slide_segment(start, dir, puck_speed, g.mu, threshold, t_hit, &mut traj) {
                SlideOutcome::Stopped { t, pos } => settle(&mut traj, t, pos, Phase::Resting),
                SlideOutcome::Reached { t, pos, speed } if covered => {
                    // Off the table edge into free flight.
                    let mut vel = [speed * dir[0], 0.0, speed * dir[1]];
                    ns.perturb(&mut vel, false);
                    let (t_land, land, _) = flight_segment(pos, vel, 0.0, t, &mut traj);
                    settle(&mut traj, t_land, land, Phase::Resting)
                }
                SlideOutcome::Reached { t, pos, speed } => {
                    gap_fall(&g, pos, [speed * dir[0], 0.0, speed * dir[1]], t, &mut traj)
                }
            }
        }
    };

    let reward = reward_of(task, &final_state);
    (final_state, reward, traj)
}

/// Projectile drop inside the gap. Hitting the far wall kills the
/// horizontal motion; either way the object settles on the gap floor.
fn gap_fall(
    g: &Geometry,
    entry: [f64; 3],
    vel: [f64; 3],
    t0: f64,
    traj: &mut Vec<TrajectoryPoint>,
) -> WorldState {
    let gap_end = g.gap_start + g.gap_width;
    let t_floor =
        (vel[1] + (vel[1] * vel[1] + 2.0 * GRAVITY * entry[1]).sqrt()) / GRAVITY;
    let t_wall = if vel[0] > 0.0 { (gap_end - entry[0]) / vel[0] } else { f64::INFINITY };
    if t_floor <= t_wall {
        let (t_land, land, _) = flight_segment(entry, vel, 0.0, t0, traj);
        settle(traj, t_land, land, Phase::InGap)
    } else {
        let wall = [
            gap_end,
            entry[1] + vel[1] * t_wall - 0.5 * GRAVITY * t_wall * t_wall,
            entry[2] + vel[2] * t_wall,
        ];
        record(
            traj,
            t0 + t_wall,
            WorldState {
                position: wall,
                velocity: [0.0, vel[1] - GRAVITY * t_wall, 0.0],
                phase: Phase::Airborne,
            },
        );
        let (t_land, land, _) = flight_segment(
            wall,
            [0.0, vel[1] - GRAVITY * t_wall, 0.0],
            0.0,
            t0 + t_wall,
            traj,
        );
        settle(traj, t_land, land, Phase::InGap)
    }
}

/// Writes a trajectory as CSV with header `t,x,y,z,vx,vy,vz,phase`.
pub fn write_trajectory_csv(path: &Path, traj: &[TrajectoryPoint]) -> Result<()> {
    let as_format = |e: csv::Error| crate::Error::Format(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(as_format)?;
    w.write_record(["t", "x", "y", "z", "vx", "vy", "vz", "phase"])
        .map_err(as_format)?;
    for p in traj {
        let s = &p.state;
        w.write_record([
            p.t.to_string(),
            s.position[0].to_string(),
            s.position[1].to_string(),
            s.position[2].to_string(),
            s.velocity[0].to_string(),
            s.velocity[1].to_string(),
            s.velocity[2].to_string(),
            s.phase.name().to_string(),
        ])
        .map_err(as_format)?;
    }
    w.flush()?;
    Ok(())
}
