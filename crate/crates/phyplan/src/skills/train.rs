//! Training, inverse identification, and forward prediction.

use std::collections::BTreeSet;
use std::sync::Mutex;

use super::loss::PinnObjective;
use super::{
    CollocationSet, Dataset, Skill, SkillModel, SkillSpec, TrainingReport, COLLOCATION_RATIO,
};
use crate::numerics::{lbfgs_minimize, xavier_init, LBFGSConfig};
use crate::{Error, Result};

/// Trains a skill model on `data`, enforcing the residual at `colloc`'s
/// points, with any unknown physical constants riding on the trainable
/// vector. Deterministic for a fixed seed; on divergence or a stalled line
/// search the best parameters so far are returned, flagged in the report.
pub fn train(
    spec: &SkillSpec,
    data: &Dataset,
    colloc: &CollocationSet,
    cfg: &LBFGSConfig,
    seed: u64,
) -> Result<SkillModel> {
    let template = xavier_init(&spec.layer_sizes(), seed)?;
    let objective = PinnObjective::new(spec, data, colloc, template)?;
    let init = objective.initial_params();
    let result = lbfgs_minimize(&objective, &init, cfg);
    let (final_data_loss, final_physics_loss) = objective.loss_terms(&result.params);
    let (net, values) = objective.unpack(&result.params);
    let learned_params = spec
        .unknown_param_indices()
        .into_iter()
        .map(|i| (spec.physical_params[i].name.to_string(), values[i]))
        .collect();
    Ok(SkillModel {
        spec: spec.clone(),
        net,
        bounds: colloc.bounds.clone(),
        learned_params,
        training_report: TrainingReport {
            final_data_loss,
            final_physics_loss,
            iterations: result.loss_history.len(),
            status: result.status,
        },
    })
}

/// Estimates a skill's unknown physical constants by joint training, with
/// collocation points drawn over the data's own input range.
///
/// Returns the trained model and the named estimates.
pub fn identify_parameter(
    spec: &SkillSpec,
    data: &Dataset,
    cfg: &LBFGSConfig,
    seed: u64,
) -> Result<(SkillModel, Vec<(String, f64)>)> {
    if !spec.has_physics_loss {
        return Err(Error::DataOnlySkill(spec.skill.to_string()));
    }
    if spec.unknown_param_indices().is_empty() {
        return Err(Error::Config(format!(
            "{} has no unknown physical parameter to identify",
            spec.skill
        )));
    }
    if data.rows.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    data.validate_for(spec)?;
    let bounds = data.input_bounds();
    let colloc = CollocationSet::sample(
        &bounds,
        COLLOCATION_RATIO * data.rows.len(),
        seed.wrapping_add(0x9e37_79b9),
    );
    let model = train(spec, data, &colloc, cfg, seed)?;
    let estimates = model.learned_params.clone();
    Ok((model, estimates))
}

/// Forward prediction at query time `t`.
///
/// `init` holds every input field except the query time, in schema order;
/// for the time-free collision skills it holds all fields and `t` is
/// ignored. Inputs outside the trained bounds are extrapolations, logged as
/// a warning once per skill and field. Panics on dimension mismatch.
pub fn predict(model: &SkillModel, init: &[f64], t: f64) -> Vec<f64> {
    let spec = &model.spec;
    let raw = match spec.time_index {
        Some(ti) => {
            assert_eq!(
                init.len(),
                spec.n_inputs() - 1,
                "{} takes {} inputs plus the query time",
                spec.skill,
                spec.n_inputs() - 1
            );
            let mut raw = Vec::with_capacity(spec.n_inputs());
            raw.extend_from_slice(&init[..ti]);
            raw.push(t);
            raw.extend_from_slice(&init[ti..]);
            raw
        }
        None => {
            assert_eq!(
                init.len(),
                spec.n_inputs(),
                "{} takes {} inputs",
                spec.skill,
                spec.n_inputs()
            );
            init.to_vec()
        }
    };
    for (field, (&v, &(lo, hi))) in spec
        .input_fields
        .iter()
        .zip(raw.iter().zip(&model.bounds))
    {
        let slack = 1e-9 * (hi - lo).abs().max(1.0);
        if v < lo - slack || v > hi + slack {
            // One warning per (skill, field) per process: planner rollouts
            // query thousands of nearby points, and a line per query buries
            // the signal.
            static WARNED: Mutex<BTreeSet<(Skill, &'static str)>> = Mutex::new(BTreeSet::new());
            if WARNED.lock().unwrap().insert((spec.skill, *field)) {
                log::warn!(
                    "{} input {field}={v} outside trained range [{lo}, {hi}] \
                     (first occurrence; further ones are not logged)",
                    spec.skill
                );
            }
        }
    }
    model.net.forward(&model.normalizer().normalize(&raw))
}

#[cfg(test)]
mod tests {
    use super::super::{build_skill, CollocationSet, DataRow, Dataset, Skill};
    use super::*;
    use crate::numerics::{Activation, DenseNetwork, Termination};
    use crate::GRAVITY;

    fn tiny_sliding_data(n: usize, mu: f64) -> Dataset {
        let rows = (0..n)
            .map(|k| {
                let v0 = 0.5 + 2.5 * (k as f64 + 0.5) / n as f64;
                let t = 0.9 * (k as f64 % 7.0) / 7.0;
                DataRow {
                    input: vec![v0, t],
                    target: vec![v0 * t - 0.5 * mu * GRAVITY * t * t, v0 - mu * GRAVITY * t],
                }
            })
            .collect();
        Dataset {
            rows,
            provenance: None,
        }
    }

    fn quick_cfg(iters: usize) -> LBFGSConfig {
        LBFGSConfig {
            max_iterations: iters,
            ..LBFGSConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let spec = build_skill(Skill::Sliding).with_known_param("mu", 0.2).unwrap();
        let data = tiny_sliding_data(10, 0.2);
        let colloc = CollocationSet::sample(&[(0.5, 3.0), (0.0, 0.9)], 40, 3);
        let a = train(&spec, &data, &colloc, &quick_cfg(15), 42).unwrap();
        let b = train(&spec, &data, &colloc, &quick_cfg(15), 42).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(
            a.training_report.final_data_loss.to_bits(),
            b.training_report.final_data_loss.to_bits()
        );
        let c = train(&spec, &data, &colloc, &quick_cfg(15), 43).unwrap();
        assert_ne!(a.net, c.net);
    }

    #[test]
    fn training_reduces_both_loss_terms() {
        let spec = build_skill(Skill::Sliding).with_known_param("mu", 0.2).unwrap();
        let data = tiny_sliding_data(16, 0.2);
        let colloc = CollocationSet::sample(&[(0.5, 3.0), (0.0, 0.9)], 64, 3);
        let start = train(&spec, &data, &colloc, &quick_cfg(0), 7).unwrap();
        let done = train(&spec, &data, &colloc, &quick_cfg(60), 7).unwrap();
        assert_eq!(start.training_report.iterations, 0);
        assert!(done.training_report.iterations > 0);
        let before = start.training_report.final_data_loss + start.training_report.final_physics_loss;
        let after = done.training_report.final_data_loss + done.training_report.final_physics_loss;
        assert!(after < before, "loss went {before} -> {after}");
        assert!(after.is_finite());
    }

    #[test]
    fn unknown_parameter_moves_during_training() {
        let spec = build_skill(Skill::Sliding).with_param_guess("mu", 0.05).unwrap();
        let data = tiny_sliding_data(16, 0.3);
        let colloc = CollocationSet::sample(&[(0.5, 3.0), (0.0, 0.9)], 64, 5);
        let model = train(&spec, &data, &colloc, &quick_cfg(40), 11).unwrap();
        assert_eq!(model.learned_params.len(), 1);
        assert_eq!(model.learned_params[0].0, "mu");
        assert_ne!(model.learned_params[0].1, 0.05);
    }

    #[test]
    fn identify_rejects_unsuitable_skills() {
        let data = Dataset {
            rows: vec![DataRow {
                input: vec![0.1, 0.1, 1.0],
                target: vec![1.0],
            }],
            provenance: None,
        };
        let cfg = quick_cfg(1);
        assert!(identify_parameter(&build_skill(Skill::Hitting), &data, &cfg, 1).is_err());
        let throwing = build_skill(Skill::Throwing);
        let tdata = Dataset {
            rows: vec![DataRow {
                input: vec![1.0, 1.0, 0.1],
                target: vec![0.0, 0.0, 0.1],
            }],
            provenance: None,
        };
        assert!(identify_parameter(&throwing, &tdata, &cfg, 1).is_err());
    }

    fn zero_model(skill: Skill) -> SkillModel {
        let spec = build_skill(skill);
        let sizes = [spec.n_inputs(), 4, spec.n_outputs()];
        SkillModel {
            net: DenseNetwork::zeros(&sizes, Activation::Tanh, Activation::Identity).unwrap(),
            bounds: vec![(0.0, 1.0); spec.n_inputs()],
            spec,
            learned_params: vec![],
            training_report: super::super::TrainingReport {
                final_data_loss: 0.0,
                final_physics_loss: 0.0,
                iterations: 0,
                status: Termination::MaxIterations,
            },
        }
    }

    #[test]
    fn predict_assembles_query_time_at_schema_position() {
        // Throwing's time slot is last; sliding's is second. A zero network
        // maps everything to zero, so only the assembly asserts matter.
        let m = zero_model(Skill::Throwing);
        assert_eq!(predict(&m, &[0.5, 0.5], 0.25), vec![0.0; 3]);
        let m = zero_model(Skill::Sliding);
        assert_eq!(predict(&m, &[0.5], 0.25), vec![0.0; 2]);
        let m = zero_model(Skill::Hitting);
        assert_eq!(predict(&m, &[0.1, 0.1, 1.0], 99.0), vec![0.0]);
    }

    #[test]
    #[should_panic(expected = "inputs plus the query time")]
    fn predict_panics_on_wrong_arity() {
        let m = zero_model(Skill::Sliding);
        predict(&m, &[0.5, 0.2], 0.1);
    }
}
