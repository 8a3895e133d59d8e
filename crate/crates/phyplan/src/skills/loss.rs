//! Data loss, physics loss, and the combined training objective.
//!
//! Both losses are means over squared error components: the data loss over
//! rows x output components, the physics loss over collocation points x
//! residual components. The objective's gradient is assembled from the
//! network's reverse passes plus the residual partials, with the chunked
//! reduction keeping the summation order independent of thread count.

use super::residual::{physics_residual, residual_adjoints};
use super::{CollocationSet, DataRow, Dataset, Normalizer, SkillModel, SkillSpec};
use crate::numerics::{DenseNetwork, ForwardCache, Objective, TangentCache};
use crate::parallel::{chunked_reduce, DEFAULT_CHUNK};
use crate::{Error, Result};

/// Mean squared prediction error over all rows and output components.
pub fn data_loss(model: &SkillModel, data: &Dataset) -> Result<f64> {
    if data.rows.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    data.validate_for(&model.spec)?;
    Ok(data_loss_raw(&model.net, &model.normalizer(), &data.rows))
}

/// Mean squared residual component over all collocation points.
pub fn physics_loss(model: &SkillModel, colloc: &CollocationSet) -> Result<f64> {
    if !model.spec.has_physics_loss {
        return Err(Error::DataOnlySkill(model.spec.skill.to_string()));
    }
    if colloc.points.is_empty() {
        return Err(Error::Config("empty collocation set".into()));
    }
    Ok(physics_loss_raw(
        &model.net,
        &model.normalizer(),
        &model.spec,
        &model.effective_params(),
        &colloc.points,
    ))
}

/// Data loss plus physics loss; the physics term is omitted for data-only
/// skills.
pub fn total_loss(model: &SkillModel, data: &Dataset, colloc: &CollocationSet) -> Result<f64> {
    let d = data_loss(model, data)?;
    if model.spec.has_physics_loss {
        Ok(d + physics_loss(model, colloc)?)
    } else {
        Ok(d)
    }
}

pub(crate) fn data_loss_raw(net: &DenseNetwork, norm: &Normalizer, rows: &[DataRow]) -> f64 {
    let m = net.output_dim();
    let scale = 1.0 / (rows.len() * m) as f64;
    chunked_reduce(
        rows,
        DEFAULT_CHUNK,
        || 0.0,
        |acc, row| {
            let y = net.forward(&norm.normalize(&row.input));
            *acc += y
                .iter()
                .zip(&row.target)
                .map(|(a, b)| (a - b) * (a - b) * scale)
                .sum::<f64>();
        },
        |acc, part| *acc += part,
    )
}

pub(crate) fn physics_loss_raw(
    net: &DenseNetwork,
    norm: &Normalizer,
    spec: &SkillSpec,
    param_values: &[f64],
    points: &[Vec<f64>],
) -> f64 {
    let time_dir = norm.raw_axis_direction(spec.time_index.expect("physics skills take time"));
    let r_dim = spec.residual_dim();
    let scale = 1.0 / (points.len() * r_dim) as f64;
    chunked_reduce(
        points,
        DEFAULT_CHUNK,
        || (0.0, ForwardCache::default(), TangentCache::default()),
        |(acc, cache, tcache), point| {
            net.forward_cached(&norm.normalize(point), cache);
            net.forward_tangent(cache, &time_dir, tcache);
            let r = physics_residual(
                spec,
                param_values,
                point,
                cache.output(),
                tcache.output_tangent(),
            )
            .expect("physics skill");
            *acc += r.iter().map(|x| x * x * scale).sum::<f64>();
        },
        |(acc, _, _), (part, _, _)| *acc += part,
    )
    .0
}

/// The trainable PINN objective: a flat parameter vector holding the
/// network weights followed by any unknown physical constants, evaluated as
/// data loss plus physics loss with its exact gradient.
pub struct PinnObjective<'a> {
    spec: &'a SkillSpec,
    data: &'a Dataset,
    colloc: &'a CollocationSet,
    template: DenseNetwork,
    normalizer: Normalizer,
    unknown_idx: Vec<usize>,
    include_physics: bool,
    n_net: usize,
}

struct GradAccum {
    loss: f64,
    grad: Vec<f64>,
    cache: ForwardCache,
    tcache: TangentCache,
    x_norm: Vec<f64>,
    out_bar: Vec<f64>,
}

impl GradAccum {
    fn new(dim: usize, n_out: usize) -> Self {
        GradAccum {
            loss: 0.0,
            grad: vec![0.0; dim],
            cache: ForwardCache::default(),
            tcache: TangentCache::default(),
            x_norm: Vec::new(),
            out_bar: vec![0.0; n_out],
        }
    }

    fn merge(&mut self, other: GradAccum) {
        self.loss += other.loss;
        for (a, b) in self.grad.iter_mut().zip(&other.grad) {
            *a += b;
        }
    }
}

impl<'a> PinnObjective<'a> {
    pub fn new(
        spec: &'a SkillSpec,
        data: &'a Dataset,
        colloc: &'a CollocationSet,
        template: DenseNetwork,
    ) -> Result<Self> {
        if data.rows.is_empty() {
            return Err(Error::Config("empty dataset".into()));
        }
        data.validate_for(spec)?;
        if template.input_dim() != spec.n_inputs() || template.output_dim() != spec.n_outputs() {
            return Err(Error::Shape(format!(
                "network is {}x{}, {} expects {}x{}",
                template.input_dim(),
                template.output_dim(),
                spec.skill,
                spec.n_inputs(),
                spec.n_outputs()
            )));
        }
        if colloc.bounds.len() != spec.n_inputs() {
            return Err(Error::Shape(format!(
                "{} bounds for {} input fields",
                colloc.bounds.len(),
                spec.n_inputs()
            )));
        }
        let include_physics = spec.has_physics_loss && !colloc.points.is_empty();
        if spec.has_physics_loss && colloc.points.is_empty() {
            return Err(Error::Config(format!(
                "{} trains with a physics loss but the collocation set is empty",
                spec.skill
            )));
        }
        let n_net = template.num_params();
        Ok(PinnObjective {
            spec,
            data,
            colloc,
            normalizer: Normalizer::from_bounds(&colloc.bounds),
            unknown_idx: if include_physics {
                spec.unknown_param_indices()
            } else {
                Vec::new()
            },
            include_physics,
            template,
            n_net,
        })
    }

    /// Total trainable dimension: network parameters plus unknowns.
    pub fn dim(&self) -> usize {
        self.n_net + self.unknown_idx.len()
    }

    /// Flat starting point: template weights, then unknown-parameter
    /// guesses in declaration order.
    pub fn initial_params(&self) -> Vec<f64> {
        let mut p = self.template.flatten();
        for &i in &self.unknown_idx {
            p.push(self.spec.physical_params[i].value);
        }
        p
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    /// Splits a flat vector into a configured network and the full
    /// physical-parameter value list.
    pub fn unpack(&self, params: &[f64]) -> (DenseNetwork, Vec<f64>) {
        assert_eq!(params.len(), self.dim(), "flat parameter length");
        let mut net = self.template.clone();
        net.set_from_flat(&params[..self.n_net]);
        let mut values = self.spec.param_values();
        for (j, &i) in self.unknown_idx.iter().enumerate() {
            values[i] = params[self.n_net + j];
        }
        (net, values)
    }

    /// The two loss terms separately, for reporting.
    pub fn loss_terms(&self, params: &[f64]) -> (f64, f64) {
        let (net, values) = self.unpack(params);
        let d = data_loss_raw(&net, &self.normalizer, &self.data.rows);
        let p = if self.include_physics {
            physics_loss_raw(&net, &self.normalizer, self.spec, &values, &self.colloc.points)
        } else {
            0.0
        };
        (d, p)
    }
}

impl Objective for PinnObjective<'_> {
    fn evaluate(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let (net, values) = self.unpack(params);
        let dim = self.dim();
        let n_net = self.n_net;
        let m = self.spec.n_outputs();

        let data_scale = 1.0 / (self.data.rows.len() * m) as f64;
        let mut total = chunked_reduce(
            &self.data.rows,
            DEFAULT_CHUNK,
            || GradAccum::new(dim, m),
            |acc, row| {
                acc.x_norm.clear();
                self.normalizer.normalize_into(&row.input, &mut acc.x_norm);
                net.forward_cached(&acc.x_norm, &mut acc.cache);
                for (j, (y, t)) in acc.cache.output().iter().zip(&row.target).enumerate() {
                    let diff = y - t;
                    acc.loss += diff * diff * data_scale;
                    acc.out_bar[j] = 2.0 * diff * data_scale;
                }
                net.backprop_data(&acc.cache, &acc.out_bar, &mut acc.grad[..n_net]);
            },
            GradAccum::merge,
        );

        if self.include_physics {
            let time_dir = self
                .normalizer
                .raw_axis_direction(self.spec.time_index.expect("physics skills take time"));
            let r_dim = self.spec.residual_dim();
            let phys_scale = 1.0 / (self.colloc.points.len() * r_dim) as f64;
            let n_phys = self.spec.physical_params.len();
            let phys = chunked_reduce(
                self.colloc.points.as_slice(),
                DEFAULT_CHUNK,
                || (GradAccum::new(dim, m), vec![0.0; r_dim], vec![0.0; n_phys]),
                |(acc, r_bar, param_bar), point| {
                    acc.x_norm.clear();
                    self.normalizer.normalize_into(point, &mut acc.x_norm);
                    net.forward_cached(&acc.x_norm, &mut acc.cache);
                    net.forward_tangent(&acc.cache, &time_dir, &mut acc.tcache);
                    let r = physics_residual(
                        self.spec,
                        &values,
                        point,
                        acc.cache.output(),
                        acc.tcache.output_tangent(),
                    )
                    .expect("physics skill");
                    for (rb, ri) in r_bar.iter_mut().zip(&r) {
                        acc.loss += ri * ri * phys_scale;
                        *rb = 2.0 * ri * phys_scale;
                    }
                    acc.out_bar.iter_mut().for_each(|v| *v = 0.0);
                    param_bar.iter_mut().for_each(|v| *v = 0.0);
                    residual_adjoints(
                        self.spec,
                        &values,
                        point,
                        acc.cache.output(),
                        r_bar,
                        &mut acc.out_bar,
                        param_bar,
                    );
                    // dr/du is the identity, so the tangent adjoint is r_bar.
                    net.backprop_tangent(
                        &acc.cache,
                        &acc.tcache,
                        &acc.out_bar,
                        r_bar,
                        &mut acc.grad[..n_net],
                    );
                    for (j, &i) in self.unknown_idx.iter().enumerate() {
                        acc.grad[n_net + j] += param_bar[i];
                    }
                },
                |(acc, _, _), (other, _, _)| acc.merge(other),
            )
            .0;
            total.loss += phys.loss;
            for (a, b) in total.grad.iter_mut().zip(&phys.grad) {
                *a += b;
            }
        }
        (total.loss, total.grad)
    }
}
