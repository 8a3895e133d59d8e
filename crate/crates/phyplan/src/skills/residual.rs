//! First-order ODE residuals and their hand-derived partials.
//!
//! Each physics skill's governing equation is written as a first-order
//! system in the network outputs, so the residual at a collocation point is
//! r = u - h(input, output, params) with u the outputs' time derivative.
//! The ordering pairs residual i with derivative component i, making
//! dr/du the identity; the remaining partials (with respect to outputs and
//! physical parameters) are coded next to each residual.

use super::{Skill, SkillSpec};
use crate::{Error, Result, GRAVITY};

fn check_dims(spec: &SkillSpec, input: &[f64], output: &[f64], d_output_dt: &[f64]) {
    assert_eq!(input.len(), spec.n_inputs(), "input dimension");
    assert_eq!(output.len(), spec.n_outputs(), "output dimension");
    assert_eq!(d_output_dt.len(), spec.n_outputs(), "derivative dimension");
}

/// Evaluates the residual vector at one point.
///
/// `param_values` aligns with `spec.physical_params`; `d_output_dt` is the
/// derivative of each output with respect to the raw query time.
pub fn physics_residual(
    spec: &SkillSpec,
    param_values: &[f64],
    input: &[f64],
    output: &[f64],
    d_output_dt: &[f64],
) -> Result<Vec<f64>> {
    if !spec.has_physics_loss {
        return Err(Error::DataOnlySkill(format!(
            "{} has no governing ODE",
            spec.skill
        )));
    }
    check_dims(spec, input, output, d_output_dt);
    assert_eq!(param_values.len(), spec.physical_params.len(), "parameter count");
    let u = d_output_dt;
    Ok(match spec.skill {
        Skill::Swinging => {
            let (theta, omega) = (output[0], output[1]);
            let l = param_values[0];
            vec![u[0] - omega, u[1] + (GRAVITY / l) * theta.sin()]
        }
        Skill::Sliding => {
            let v = output[1];
            let mu = param_values[0];
            vec![u[0] - v, u[1] + mu * GRAVITY]
        }
        Skill::Throwing => {
            let v_ver = output[0];
            let v_hor_init = input[0];
            vec![u[0] + GRAVITY, u[1] - v_ver, u[2] - v_hor_init]
        }
        Skill::Bouncing | Skill::Hitting => unreachable!("guarded by has_physics_loss"),
    })
}

/// Backpropagates residual adjoints to outputs and physical parameters.
///
/// Given `r_bar[i]` = dL/dr_i, adds dL/d(output_j) into `out_bar` and
/// dL/d(param_k) into `param_bar`. The adjoint with respect to
/// `d_output_dt` is `r_bar` itself because dr/du is the identity.
pub(crate) fn residual_adjoints(
    spec: &SkillSpec,
    param_values: &[f64],
    _input: &[f64],
    output: &[f64],
    r_bar: &[f64],
    out_bar: &mut [f64],
    param_bar: &mut [f64],
) {
    match spec.skill {
        Skill::Swinging => {
            let theta = output[0];
            let l = param_values[0];
            // r0 = u0 - omega; r1 = u1 + (g/l) sin(theta).
            out_bar[1] -= r_bar[0];
            out_bar[0] += r_bar[1] * (GRAVITY / l) * theta.cos();
            param_bar[0] += r_bar[1] * (-GRAVITY / (l * l)) * theta.sin();
        }
        Skill::Sliding => {
            // r0 = u0 - v; r1 = u1 + mu g.
            out_bar[1] -= r_bar[0];
            param_bar[0] += r_bar[1] * GRAVITY;
        }
        Skill::Throwing => {
            // r0 = u0 + g; r1 = u1 - v_ver; r2 = u2 - v_hor_init.
            out_bar[0] -= r_bar[1];
        }
        Skill::Bouncing | Skill::Hitting => unreachable!("guarded by has_physics_loss"),
    }
}

#[cfg(test)]
mod tests {
    use super::super::build_skill;
    use super::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn sliding_closed_form_is_a_zero() {
        let spec = build_skill(Skill::Sliding);
        let (v0, mu, t) = (2.0, 0.1, 1.0);
        let x = v0 * t - 0.5 * mu * GRAVITY * t * t;
        let v = v0 - mu * GRAVITY * t;
        let r = physics_residual(&spec, &[mu], &[v0, t], &[x, v], &[v, -mu * GRAVITY]).unwrap();
        assert!(norm(&r) < 1e-12, "residual {r:?}");
    }

    #[test]
    fn swinging_equilibrium_is_a_zero() {
        let spec = build_skill(Skill::Swinging);
        let r = physics_residual(&spec, &[0.5], &[0.0, 0.3], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);
    }

    #[test]
    fn projectile_closed_form_is_a_zero() {
        let spec = build_skill(Skill::Throwing);
        let (vh, vv, t) = (1.3, 2.4, 0.7);
        let output = [vv - GRAVITY * t, vv * t - 0.5 * GRAVITY * t * t, vh * t];
        let deriv = [-GRAVITY, output[0], vh];
        let r = physics_residual(&spec, &[], &[vh, vv, t], &output, &deriv).unwrap();
        assert!(norm(&r) < 1e-12, "residual {r:?}");
    }

    #[test]
    fn data_only_skills_are_rejected() {
        let spec = build_skill(Skill::Bouncing);
        assert!(physics_residual(&spec, &[], &[0.8, 0.5, -1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0])
            .is_err());
    }

    #[test]
    fn adjoints_match_finite_differences() {
        // phi = r . r_bar as a function of outputs and params; the adjoint
        // helper must produce its exact gradient.
        for skill in [Skill::Swinging, Skill::Sliding, Skill::Throwing] {
            let spec = build_skill(skill);
            let n_p = spec.physical_params.len();
            let input: Vec<f64> = (0..spec.n_inputs()).map(|i| 0.3 + 0.2 * i as f64).collect();
            let output: Vec<f64> = (0..spec.n_outputs()).map(|i| 0.5 - 0.3 * i as f64).collect();
            let deriv: Vec<f64> = (0..spec.n_outputs()).map(|i| -0.2 + 0.4 * i as f64).collect();
            let params: Vec<f64> = (0..n_p).map(|i| 0.6 + 0.1 * i as f64).collect();
            let r_bar: Vec<f64> = (0..spec.residual_dim()).map(|i| 1.0 + i as f64).collect();

            let phi = |output: &[f64], params: &[f64]| -> f64 {
                physics_residual(&spec, params, &input, output, &deriv)
                    .unwrap()
                    .iter()
                    .zip(&r_bar)
                    .map(|(r, b)| r * b)
                    .sum()
            };

            let mut out_bar = vec![0.0; spec.n_outputs()];
            let mut param_bar = vec![0.0; n_p];
            residual_adjoints(&spec, &params, &input, &output, &r_bar, &mut out_bar, &mut param_bar);

            let h = 1e-6;
            for j in 0..spec.n_outputs() {
                let mut op = output.clone();
                let mut om = output.clone();
                op[j] += h;
                om[j] -= h;
                let fd = (phi(&op, &params) - phi(&om, &params)) / (2.0 * h);
                assert!(
                    (out_bar[j] - fd).abs() < 1e-7,
                    "{skill:?} output {j}: adjoint {} fd {fd}",
                    out_bar[j]
                );
            }
            for k in 0..n_p {
                let mut pp = params.clone();
                let mut pm = params.clone();
                pp[k] += h;
                pm[k] -= h;
                let fd = (phi(&output, &pp) - phi(&output, &pm)) / (2.0 * h);
                assert!(
                    (param_bar[k] - fd).abs() < 1e-6,
                    "{skill:?} param {k}: adjoint {} fd {fd}",
                    param_bar[k]
                );
            }
        }
    }
}
