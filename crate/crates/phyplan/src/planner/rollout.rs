//! Skill-chaining rollouts: step the skill models at fixed query increments,
//! hand each skill's terminal state to the next, and score the predicted
//! final position against the task goal.

use rand::Rng;

use crate::skills::Skill;
use crate::worldsim::{Geometry, SkillPredictor, Task, TaskDef};

use super::{PlanEnv, PlannerConfig, SearchState, TreeNode};

/// Hard wall-clock bound on a single skill segment, seconds. Every task
/// phase finishes in well under a second; the cap only matters for wildly
/// wrong models, which otherwise could step forever.
const MAX_SEGMENT_SECONDS: f64 = 20.0;

fn max_steps(t_step: f64) -> usize {
    ((MAX_SEGMENT_SECONDS / t_step).ceil() as usize).clamp(1, 1_000_000)
}

/// Fraction of a query step at which an event occurred, from the bracketing
/// sample values. Degenerate brackets resolve to the earlier sample.
fn event_frac(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Bob speed at the bottom of the swing: steps the swinging model until the
/// predicted angle crosses zero, interpolating omega inside the crossing
/// step. Falls back to the last sample if the model never crosses.
/// `None` means the model produced a non-finite value.
fn swing_exit(
    models: &dyn SkillPredictor,
    g: &Geometry,
    theta_rel: f64,
    t_step: f64,
) -> Option<f64> {
    let l = g.pendulum_length;
    let (mut th_prev, mut om_prev) = (theta_rel, 0.0);
    for k in 1..=max_steps(t_step) {
        let out = models.predict(Skill::Swinging, &[theta_rel], k as f64 * t_step);
        let (th, om) = (out[0], out[1]);
        if !(th.is_finite() && om.is_finite()) {
            return None;
        }
        if th <= 0.0 {
            let frac = event_frac(th_prev, th_prev - th);
            let om_cross = om_prev + frac * (om - om_prev);
            return Some((l * om_cross).abs());
        }
        (th_prev, om_prev) = (th, om);
    }
    Some((l * om_prev).abs())
}

struct FlightExit {
    /// Horizontal displacement along the throw direction at exit.
    x: f64,
    /// Vertical velocity at exit.
    v_ver: f64,
    /// True when the `x_limit` wall was reached before the floor.
    hit_wall: bool,
}

/// Steps the throwing model until the predicted height drops by `drop`
/// meters, or until horizontal displacement reaches `x_limit` (used for the
/// gap's far wall; callers pass it only with forward motion). Events are
/// located by linear interpolation between the bracketing samples.
fn flight_exit(
    models: &dyn SkillPredictor,
    v_hor: f64,
    v_ver: f64,
    drop: f64,
    x_limit: Option<f64>,
    t_step: f64,
) -> Option<FlightExit> {
    debug_assert!(drop > 0.0, "flights always end below their start");
    let (mut x_prev, mut y_prev, mut vv_prev) = (0.0, 0.0, v_ver);
    for k in 1..=max_steps(t_step) {
        let out = models.predict(Skill::Throwing, &[v_hor, v_ver], k as f64 * t_step);
        let (vv, y, x) = (out[0], out[1], out[2]);
        if !(vv.is_finite() && y.is_finite() && x.is_finite()) {
            return None;
        }
        let frac_floor = (y <= -drop).then(|| event_frac(y_prev + drop, y_prev - y));
        let frac_wall =
            x_limit.and_then(|lim| (x >= lim).then(|| event_frac(lim - x_prev, x - x_prev)));
        match (frac_floor, frac_wall) {
            (Some(ff), Some(fw)) if fw <= ff => {
                return Some(FlightExit {
                    x: x_limit.expect("wall crossing implies a limit"),
                    v_ver: vv_prev + fw * (vv - vv_prev),
                    hit_wall: true,
                });
            }
            (Some(ff), _) => {
                return Some(FlightExit {
                    x: x_prev + ff * (x - x_prev),
                    v_ver: vv_prev + ff * (vv - vv_prev),
                    hit_wall: false,
                });
            }
            (None, Some(fw)) => {
                return Some(FlightExit {
                    x: x_limit.expect("wall crossing implies a limit"),
                    v_ver: vv_prev + fw * (vv - vv_prev),
                    hit_wall: true,
                });
            }
            (None, None) => {}
        }
        (x_prev, y_prev, vv_prev) = (x, y, vv);
    }
    Some(FlightExit { x: x_prev, v_ver: vv_prev, hit_wall: false })
}

enum SlideExit {
    /// Friction consumed the momentum after arc length `x`.
    Stopped { x: f64 },
    /// Arc length `limit` was reached first, moving at `v`.
    Crossed { x: f64, v: f64 },
}

/// Steps the sliding model until the predicted speed crosses zero or the
/// position passes `limit`, whichever the interpolated fractions say came
/// first.
fn slide_exit(
    models: &dyn SkillPredictor,
    v0: f64,
    limit: Option<f64>,
    t_step: f64,
) -> Option<SlideExit> {
    let (mut x_prev, mut v_prev) = (0.0, v0);
    for k in 1..=max_steps(t_step) {
        let out = models.predict(Skill::Sliding, &[v0], k as f64 * t_step);
        let (x, v) = (out[0], out[1]);
        if !(x.is_finite() && v.is_finite()) {
            return None;
        }
        let frac_stop = (v <= 0.0).then(|| event_frac(v_prev, v_prev - v));
        let frac_cross =
            limit.and_then(|lim| (x >= lim).then(|| event_frac(lim - x_prev, x - x_prev)));
        match (frac_stop, frac_cross) {
            (Some(fs), Some(fc)) if fc <= fs => {
                return Some(SlideExit::Crossed {
                    x: limit.expect("crossing implies a limit"),
                    v: v_prev + fc * (v - v_prev),
                });
            }
            (Some(fs), _) => {
                return Some(SlideExit::Stopped { x: x_prev + fs * (x - x_prev) });
            }
            (None, Some(fc)) => {
                return Some(SlideExit::Crossed {
                    x: limit.expect("crossing implies a limit"),
                    v: v_prev + fc * (v - v_prev),
                });
            }
            (None, None) => {}
        }
        (x_prev, v_prev) = (x, v);
    }
    Some(SlideExit::Stopped { x: x_prev })
}

/// Puck speed after the pendulum bob strikes it at `bob_speed`.
fn hit_speed(models: &dyn SkillPredictor, g: &Geometry, bob_speed: f64) -> Option<f64> {
    let out = models.predict(Skill::Hitting, &[g.m1, g.m2, bob_speed], 0.0);
    out[0].is_finite().then_some(out[0])
}

/// Runs the task's skill chain on `action` using the given models, stepping
/// time-indexed skills every `t_step` seconds. Returns the reward of the
/// predicted final position along with that position. A model that produces
/// non-finite values scores 0 at the task's start position.
pub fn chain_rollout(
    task: &TaskDef,
    models: &dyn SkillPredictor,
    t_step: f64,
    action: &[f64],
) -> (f64, [f64; 3]) {
    let a = task.clamp_action(action);
    let g = task.geometry;
    let (start, landed) = match task.task {
        Task::Launch => {
            let start = [0.0, g.launch_pivot_height - g.pendulum_length, 0.0];
            let landed = (|| {
                let u = [a[1].cos(), a[1].sin()];
                let speed = swing_exit(models, &g, a[0], t_step)?;
                let release_h = g.launch_pivot_height - g.pendulum_length;
                let fl = flight_exit(models, speed, 0.0, release_h, None, t_step)?;
                Some([fl.x * u[0], 0.0, fl.x * u[1]])
            })();
            (start, landed)
        }
        Task::Bounce => {
            let start = [0.0, g.wedge_height, 0.0];
            let landed = (|| {
                let (h, theta_w) = (a[0], a[1]);
                let drop = flight_exit(models, 0.0, 0.0, h, None, t_step)?;
                let out = models.predict(
                    Skill::Bouncing,
                    &[g.e, theta_w, drop.v_ver, 0.0],
                    0.0,
                );
                let (vv, vh) = (out[0], out[1]);
                if !(vv.is_finite() && vh.is_finite()) {
                    return None;
                }
                let fl = flight_exit(models, vh, vv, g.wedge_height, None, t_step)?;
                Some([drop.x + fl.x, 0.0, 0.0])
            })();
            (start, landed)
        }
        Task::Slide => {
            let start = [0.0, g.table_height, 0.0];
            let landed = (|| {
                let u = [a[1].cos(), a[1].sin()];
                let speed = swing_exit(models, &g, a[0], t_step)?;
                let puck = hit_speed(models, &g, speed)?;
                if puck <= 0.0 {
                    return Some(start);
                }
                match slide_exit(models, puck, None, t_step)? {
                    SlideExit::Stopped { x } => {
                        Some([x * u[0], g.table_height, x * u[1]])
                    }
                    SlideExit::Crossed { .. } => unreachable!("slide has no cut threshold"),
                }
            })();
            (start, landed)
        }
        Task::Bridge => {
            let start = [0.0, g.table_height, 0.0];
            let landed = (|| {
                let speed = swing_exit(models, &g, a[0], t_step)?;
                let puck = hit_speed(models, &g, speed)?;
                if puck <= 0.0 {
                    return Some(start);
                }
                let covered = g.bridge_covers_gap(a[1]);
                let threshold = if covered { g.table_edge } else { g.gap_start };
                match slide_exit(models, puck, Some(threshold), t_step)? {
                    SlideExit::Stopped { x } => Some([x, g.table_height, 0.0]),
                    SlideExit::Crossed { x, v } if covered => {
                        let fl = flight_exit(models, v, 0.0, g.table_height, None, t_step)?;
                        Some([x + fl.x, 0.0, 0.0])
                    }
                    SlideExit::Crossed { x, v } => {
                        // Uncovered gap: fall in, possibly clipped by the far
                        // wall, and settle on the gap floor.
                        let fl = flight_exit(
                            models,
                            v,
                            0.0,
                            g.table_height,
                            Some(g.gap_width),
                            t_step,
                        )?;
                        let x_rest = if fl.hit_wall { x + g.gap_width } else { x + fl.x };
                        Some([x_rest, 0.0, 0.0])
                    }
                }
            })();
            (start, landed)
        }
    };
    match landed {
        Some(pos) => (crate::worldsim::goal_reward(&task.goal, task.d_ref, pos), pos),
        None => (0.0, start),
    }
}

/// Maps an in-bounds action to the unit cube, dimension by dimension.
pub(crate) fn normalize_action(task: &TaskDef, action: &[f64]) -> Vec<f64> {
    task.action_dims
        .iter()
        .zip(action)
        .map(|(dim, &v)| if dim.width() > 0.0 { (v - dim.lo) / dim.width() } else { 0.5 })
        .collect()
}

/// Completes the node's partial action uniformly, rolls out the skill chain,
/// and applies the GP-UCB correction on the full action. The corrected value
/// is what the tree stores and what the best-rollout tracker compares.
pub fn pinn_rollout(
    node: &TreeNode,
    env: &PlanEnv<'_>,
    cfg: &PlannerConfig,
    state: &mut SearchState,
) -> f64 {
    let mut action = node.partial_action.clone();
    for dim in &env.task.action_dims[action.len()..] {
        action.push(state.rng.gen_range(dim.lo..=dim.hi));
    }
    let (raw, _) = chain_rollout(env.task, env.models, cfg.t_query_step, &action);
    let norm = normalize_action(env.task, &action);
    let value = crate::adapt::ucb_correct(env.gp, &norm, raw)
        .expect("plan validated the GP dimension against the task");
    state.rollouts += 1;
    let improves = state.best.as_ref().map_or(true, |(_, best)| value > *best);
    if improves {
        state.best = Some((action, value));
    }
    value
}
