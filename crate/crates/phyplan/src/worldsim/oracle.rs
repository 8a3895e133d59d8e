//! Ground-truth skill dynamics: closed forms where they exist, RK4 where
//! they do not, and a fully-numeric slow variant for cost baselines. The
//! slow variant is structured like a general-purpose simulator core: it
//! carries the body's complete translational state and dispatches the force
//! model dynamically, instead of exploiting the per-skill coordinate
//! reductions the closed forms rest on.

use crate::skills::{predict, Skill, SkillSet};
use crate::worldsim::Geometry;
use crate::{Error, Result, GRAVITY};

/// Fixed RK4 step for numerically integrated skills, seconds.
pub const RK4_STEP: f64 = 1e-4;

/// Physical constants each skill's oracle consumes, in order:
/// swinging `[l]`, sliding `[mu]`, hitting `[e_c]`, others none.
fn expected_params(skill: Skill) -> usize {
    match skill {
        Skill::Swinging | Skill::Sliding | Skill::Hitting => 1,
        Skill::Throwing | Skill::Bouncing => 0,
    }
}

/// Initial-condition arity, excluding the query time.
fn expected_init(skill: Skill) -> usize {
    match skill {
        Skill::Swinging | Skill::Sliding => 1,
        Skill::Throwing => 2,
        Skill::Hitting => 3,
        Skill::Bouncing => 4,
    }
}

fn validate(skill: Skill, params: &[f64], init: &[f64], t: f64) -> Result<()> {
    if params.len() != expected_params(skill) {
        return Err(Error::Shape(format!(
            "oracle for '{skill}' takes {} physical constant(s), got {}",
            expected_params(skill),
            params.len()
        )));
    }
    if init.len() != expected_init(skill) {
        return Err(Error::Shape(format!(
            "oracle for '{skill}' takes {} initial value(s), got {}",
            expected_init(skill),
            init.len()
        )));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Config(format!("query time must be finite and >= 0, got {t}")));
    }
    if skill == Skill::Swinging && params[0] <= 0.0 {
        return Err(Error::Config(format!("pendulum length must be positive, got {}", params[0])));
    }
    if skill == Skill::Sliding {
        if params[0] < 0.0 {
            return Err(Error::Config(format!(
                "friction coefficient must be >= 0, got {}",
                params[0]
            )));
        }
        if init[0] < 0.0 {
            return Err(Error::Config(format!("slide speed must be >= 0, got {}", init[0])));
        }
    }
    if skill == Skill::Hitting && (init[0] <= 0.0 || init[1] <= 0.0) {
        return Err(Error::Config(format!(
            "masses must be positive, got m1 = {}, m2 = {}",
            init[0], init[1]
        )));
    }
    Ok(())
}

/// One classical RK4 step of size `h` on a two-state system.
fn rk4_step2(f: impl Fn(f64, f64) -> (f64, f64), y: (f64, f64), h: f64) -> (f64, f64) {
    let k1 = f(y.0, y.1);
    let k2 = f(y.0 + 0.5 * h * k1.0, y.1 + 0.5 * h * k1.1);
    let k3 = f(y.0 + 0.5 * h * k2.0, y.1 + 0.5 * h * k2.1);
    let k4 = f(y.0 + h * k3.0, y.1 + h * k3.1);
    (
        y.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        y.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Integrates the pendulum from rest at `theta0` for time `t`.
/// Returns (theta, omega).
pub(crate) fn pendulum_rk4(theta0: f64, l: f64, t: f64) -> (f64, f64) {
    let f = |theta: f64, omega: f64| (omega, -(GRAVITY / l) * theta.sin());
    let mut y = (theta0, 0.0);
    let mut remaining = t;
    while remaining > 0.0 {
        let h = remaining.min(RK4_STEP);
        y = rk4_step2(&f, y, h);
        remaining -= h;
    }
    y
}

fn bounce_outgoing(e: f64, theta_w: f64, v_ver: f64, v_hor: f64) -> (f64, f64) {
    // Wedge surface tilted theta_w from horizontal; unit normal points up
    // and toward negative x, so a vertical drop rebounds toward -x.
    let (nx, ny) = (-theta_w.sin(), theta_w.cos());
    let vn = v_hor * nx + v_ver * ny;
    (v_ver - (1.0 + e) * vn * ny, v_hor - (1.0 + e) * vn * nx)
}

/// Exact state of one skill's dynamics at query time `t`. Output order and
/// meaning match the skill's declared output fields. The collision skills
/// ignore `t`.
pub fn oracle_predict(skill: Skill, params: &[f64], init: &[f64], t: f64) -> Result<Vec<f64>> {
    validate(skill, params, init, t)?;
    Ok(match skill {
        Skill::Swinging => {
            let (theta, omega) = pendulum_rk4(init[0], params[0], t);
            vec![theta, omega]
        }
        Skill::Sliding => {
            let (v0, mu) = (init[0], params[0]);
            let decel = mu * GRAVITY;
            // The object stops once friction has consumed its momentum.
            if decel > 0.0 && t >= v0 / decel {
                vec![v0 * v0 / (2.0 * decel), 0.0]
            } else {
                vec![v0 * t - 0.5 * decel * t * t, v0 - decel * t]
            }
        }
        Skill::Throwing => {
            let (v_hor, v_ver) = (init[0], init[1]);
            vec![v_ver - GRAVITY * t, v_ver * t - 0.5 * GRAVITY * t * t, v_hor * t]
        }
        Skill::Bouncing => {
            let (v_ver, v_hor) = bounce_outgoing(init[0], init[1], init[2], init[3]);
            vec![v_ver, v_hor]
        }
        Skill::Hitting => {
            let (m1, m2, v) = (init[0], init[1], init[2]);
            vec![(1.0 + params[0]) * m1 * v / (m1 + m2)]
        }
    })
}

/// Dynamics evaluator for the slow integrator: writes dstate/dt into `dydt`.
/// Dispatched through a trait object the way a general-purpose engine
/// dispatches its force generators.
type Dynamics<'a> = &'a dyn Fn(f64, &[f64], &mut [f64]);

/// Scratch for one runtime-sized RK4 step: four derivative slots and one
/// stage state, each as wide as the state vector.
struct Rk4Scratch {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Rk4Scratch {
    fn new(dim: usize) -> Self {
        Rk4Scratch { k: std::array::from_fn(|_| vec![0.0; dim]), stage: vec![0.0; dim] }
    }
}

/// One classical RK4 step of size `h` on a runtime-sized state vector,
/// advancing `y` in place.
fn rk4_step_n(rhs: Dynamics<'_>, t: f64, y: &mut [f64], h: f64, s: &mut Rk4Scratch) {
    let n = y.len();
    rhs(t, y, &mut s.k[0]);
    for i in 0..n {
        s.stage[i] = y[i] + 0.5 * h * s.k[0][i];
    }
    rhs(t + 0.5 * h, &s.stage, &mut s.k[1]);
    for i in 0..n {
        s.stage[i] = y[i] + 0.5 * h * s.k[1][i];
    }
    rhs(t + 0.5 * h, &s.stage, &mut s.k[2]);
    for i in 0..n {
        s.stage[i] = y[i] + h * s.k[2][i];
    }
    rhs(t + h, &s.stage, &mut s.k[3]);
    for i in 0..n {
        y[i] += h / 6.0 * (s.k[0][i] + 2.0 * s.k[1][i] + 2.0 * s.k[2][i] + s.k[3][i]);
    }
}

/// Integrates `y` from time 0 to `t` at [`RK4_STEP`], final partial step
/// included.
fn rk4_sweep(rhs: Dynamics<'_>, y: &mut [f64], t: f64) {
    let mut s = Rk4Scratch::new(y.len());
    let mut elapsed = 0.0;
    while elapsed < t {
        let h = (t - elapsed).min(RK4_STEP);
        rk4_step_n(rhs, elapsed, y, h, &mut s);
        elapsed += h;
    }
}

/// Index layout of the slow integrator's rigid-body state.
const POS: std::ops::Range<usize> = 0..3;
const VEL: std::ops::Range<usize> = 3..6;

/// Same contract as [`oracle_predict`], but every time-indexed skill is
/// integrated numerically from zero at [`RK4_STEP`] on each call, over the
/// body's full position-and-velocity state under the skill's force model.
/// This is the cost model of querying a conventional fine-grained simulator,
/// which knows forces and integration, not the coordinate reductions behind
/// the closed forms.
pub fn slow_oracle_predict(skill: Skill, params: &[f64], init: &[f64], t: f64) -> Result<Vec<f64>> {
    validate(skill, params, init, t)?;
    Ok(match skill {
        Skill::Swinging => {
            let l = params[0];
            let rhs = |_t: f64, s: &[f64], d: &mut [f64]| {
                d[0] = s[1];
                d[1] = -(GRAVITY / l) * s[0].sin();
            };
            let mut y = vec![init[0], 0.0];
            rk4_sweep(&rhs, &mut y, t);
            y
        }
        Skill::Sliding => {
            let (v0, mu) = (init[0], params[0]);
            let decel = mu * GRAVITY;
            // Coulomb friction opposes the velocity, whichever way it points.
            let rhs = |_t: f64, s: &[f64], d: &mut [f64]| {
                d[POS].copy_from_slice(&s[VEL]);
                let speed = s[VEL].iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = if speed > 0.0 { -decel / speed } else { 0.0 };
                for (dv, v) in d[VEL].iter_mut().zip(&s[VEL]) {
                    *dv = scale * v;
                }
            };
            let mut y = vec![0.0, 0.0, 0.0, v0, 0.0, 0.0];
            let mut s = Rk4Scratch::new(y.len());
            let mut elapsed = 0.0;
            while elapsed < t && y[3] > 0.0 {
                let h = (t - elapsed).min(RK4_STEP);
                if decel > 0.0 && y[3] <= decel * h {
                    // Stiction: the remaining momentum cannot survive the
                    // step, so the body sticks at the exact stopping point
                    // instead of chattering across the sign change.
                    let tau = y[3] / decel;
                    y[0] += y[3] * tau - 0.5 * decel * tau * tau;
                    y[3] = 0.0;
                } else {
                    rk4_step_n(&rhs, elapsed, &mut y, h, &mut s);
                }
                elapsed += h;
            }
            vec![y[0], y[3].max(0.0)]
        }
        Skill::Throwing => {
            let rhs = |_t: f64, s: &[f64], d: &mut [f64]| {
                d[POS].copy_from_slice(&s[VEL]);
                d[3] = 0.0;
                d[4] = -GRAVITY;
                d[5] = 0.0;
            };
            let mut y = vec![0.0, 0.0, 0.0, init[0], init[1], 0.0];
            rk4_sweep(&rhs, &mut y, t);
            vec![y[4], y[1], y[0]]
        }
        // The collision skills are instantaneous maps either way.
        Skill::Bouncing | Skill::Hitting => oracle_predict(skill, params, init, t)?,
    })
}

/// Anything that can stand in for a skill during planning rollouts: trained
/// networks, the exact oracle, or the slow simulator.
pub trait SkillPredictor: Sync {
    /// Predicted output fields for `skill` from initial values `init`
    /// (query time excluded) at time `t`. Panics on arity misuse; planner
    /// inputs are constructed, not user-supplied.
    fn predict(&self, skill: Skill, init: &[f64], t: f64) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleMode {
    Fast,
    Slow,
}

/// Rollout backend that answers from the ground-truth dynamics, with the
/// scene's physical constants filled in.
#[derive(Clone, Copy, Debug)]
pub struct OraclePredictor {
    pub geometry: Geometry,
    pub mode: OracleMode,
}

impl OraclePredictor {
    pub fn new(geometry: Geometry, mode: OracleMode) -> Self {
        OraclePredictor { geometry, mode }
    }

    fn params_for(&self, skill: Skill) -> Vec<f64> {
        match skill {
            Skill::Swinging => vec![self.geometry.pendulum_length],
            Skill::Sliding => vec![self.geometry.mu],
            Skill::Hitting => vec![self.geometry.e_c],
            Skill::Throwing | Skill::Bouncing => vec![],
        }
    }
}

impl SkillPredictor for OraclePredictor {
    fn predict(&self, skill: Skill, init: &[f64], t: f64) -> Vec<f64> {
        let params = self.params_for(skill);
        let result = match self.mode {
            OracleMode::Fast => oracle_predict(skill, &params, init, t),
            OracleMode::Slow => slow_oracle_predict(skill, &params, init, t),
        };
        result.expect("oracle rollout query must be well-formed")
    }
}

impl SkillPredictor for SkillSet {
    fn predict(&self, skill: Skill, init: &[f64], t: f64) -> Vec<f64> {
        let model = self
            .require(skill)
            .expect("rollout requires a model for every skill in the chain");
        predict(model, init, t)
    }
}
