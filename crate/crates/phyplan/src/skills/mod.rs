//! Skill models: schemas, physics residuals, losses, training, prediction.
//!
//! A skill maps initial conditions (plus a query time, where applicable) to
//! a predicted state. Three skills carry a governing ODE enforced through a
//! residual loss at collocation points; the two collision skills are learnt
//! from data alone. Unknown physical constants (pendulum length, friction
//! coefficient) ride along as extra trainable parameters.

mod loss;
mod model_io;
mod residual;
mod train;

pub use loss::{data_loss, physics_loss, total_loss, PinnObjective};
pub use model_io::{
    read_dataset_csv, read_model, write_dataset_csv, write_model, MODEL_MAGIC,
    MODEL_FORMAT_VERSION,
};
pub use residual::physics_residual;
pub use train::{identify_parameter, predict, train};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::{DenseNetwork, Termination};
use crate::{Error, Result};

/// Width of every hidden layer in a skill network.
pub const HIDDEN_WIDTH: usize = 40;
/// Number of hidden layers in a skill network.
pub const HIDDEN_LAYERS: usize = 8;
/// Collocation points per data point, unless overridden.
pub const COLLOCATION_RATIO: usize = 4;

/// The five skills.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Skill {
    Swinging,
    Sliding,
    Throwing,
    Bouncing,
    Hitting,
}

impl Skill {
    pub const ALL: [Skill; 5] = [
        Skill::Swinging,
        Skill::Sliding,
        Skill::Throwing,
        Skill::Bouncing,
        Skill::Hitting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Skill::Swinging => "swinging",
            Skill::Sliding => "sliding",
            Skill::Throwing => "throwing",
            Skill::Bouncing => "bouncing",
            Skill::Hitting => "hitting",
        }
    }

    pub fn from_name(name: &str) -> Result<Skill> {
        Skill::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::UnknownName(format!("skill {name:?}")))
    }
}

impl std::fmt::Display for Skill {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A physical constant appearing in a skill's residual.
///
/// When `known` is false the value is only the optimizer's starting guess
/// and the constant is appended to the trainable vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysParam {
    pub name: &'static str,
    pub value: f64,
    pub known: bool,
}

impl PhysParam {
    pub fn unknown(name: &'static str, guess: f64) -> Self {
        PhysParam {
            name,
            value: guess,
            known: false,
        }
    }
}

/// A skill's input/output schema, residual flag, and physical parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SkillSpec {
    pub skill: Skill,
    pub input_fields: Vec<&'static str>,
    pub output_fields: Vec<&'static str>,
    pub has_physics_loss: bool,
    pub physical_params: Vec<PhysParam>,
    /// Index of the query-time input, if the skill takes one.
    pub time_index: Option<usize>,
}

/// Returns the schema of one skill.
///
/// Unknown-by-default constants: the pendulum length for swinging and the
/// friction coefficient for sliding, with neutral starting guesses. Callers
/// that know the true values pin them with [`SkillSpec::with_known_param`].
pub fn build_skill(skill: Skill) -> SkillSpec {
    match skill {
        Skill::Swinging => SkillSpec {
            skill,
            input_fields: vec!["theta_init", "t_query"],
            output_fields: vec!["theta", "omega"],
            has_physics_loss: true,
            physical_params: vec![PhysParam::unknown("l", 1.0)],
            time_index: Some(1),
        },
        Skill::Sliding => SkillSpec {
            skill,
            input_fields: vec!["v_init", "t_query"],
            output_fields: vec!["x", "v"],
            has_physics_loss: true,
            physical_params: vec![PhysParam::unknown("mu", 0.1)],
            time_index: Some(1),
        },
        Skill::Throwing => SkillSpec {
            skill,
            input_fields: vec!["v_hor_init", "v_ver_init", "t_query"],
            output_fields: vec!["v_ver", "y", "x"],
            has_physics_loss: true,
            physical_params: vec![],
            time_index: Some(2),
        },
        Skill::Bouncing => SkillSpec {
            skill,
            input_fields: vec!["e", "theta_w", "v_ver_init", "v_hor_init"],
            output_fields: vec!["v_ver", "v_hor"],
            has_physics_loss: false,
            physical_params: vec![],
            time_index: None,
        },
        Skill::Hitting => SkillSpec {
            skill,
            input_fields: vec!["m1", "m2", "v_init"],
            output_fields: vec!["v"],
            has_physics_loss: false,
            physical_params: vec![],
            time_index: None,
        },
    }
}

impl SkillSpec {
    pub fn n_inputs(&self) -> usize {
        self.input_fields.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_fields.len()
    }

    /// Number of residual equations (zero for data-only skills).
    pub fn residual_dim(&self) -> usize {
        if !self.has_physics_loss {
            return 0;
        }
        match self.skill {
            Skill::Swinging | Skill::Sliding => 2,
            Skill::Throwing => 3,
            Skill::Bouncing | Skill::Hitting => 0,
        }
    }

    /// Pins a physical parameter to a known value.
    pub fn with_known_param(mut self, name: &str, value: f64) -> Result<Self> {
        let p = self
            .physical_params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::UnknownName(format!("physical parameter {name:?}")))?;
        p.value = value;
        p.known = true;
        Ok(self)
    }

    /// Sets the starting guess of an unknown physical parameter.
    pub fn with_param_guess(mut self, name: &str, guess: f64) -> Result<Self> {
        let p = self
            .physical_params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::UnknownName(format!("physical parameter {name:?}")))?;
        p.value = guess;
        p.known = false;
        Ok(self)
    }

    /// Strips the residual term, leaving a purely data-driven model. Used
    /// as the comparison baseline when measuring data efficiency.
    pub fn data_only(mut self) -> Self {
        self.has_physics_loss = false;
        self
    }

    /// Current values of all physical parameters, in declaration order.
    pub fn param_values(&self) -> Vec<f64> {
        self.physical_params.iter().map(|p| p.value).collect()
    }

    /// Indices of the trainable (unknown) physical parameters.
    pub fn unknown_param_indices(&self) -> Vec<usize> {
        if !self.has_physics_loss {
            return Vec::new();
        }
        self.physical_params
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.known)
            .map(|(i, _)| i)
            .collect()
    }

    /// The network shape used for this skill.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(HIDDEN_LAYERS + 2);
        sizes.push(self.n_inputs());
        sizes.extend(std::iter::repeat(HIDDEN_WIDTH).take(HIDDEN_LAYERS));
        sizes.push(self.n_outputs());
        sizes
    }
}

/// One training sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DataRow {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// How a dataset was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub noise_sigma: f64,
    pub seed: u64,
    pub generator: String,
}

/// Supervised samples for one skill.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub rows: Vec<DataRow>,
    /// Absent when the dataset was loaded from a file of unknown origin.
    pub provenance: Option<Provenance>,
}

impl Dataset {
    /// Checks every row's dimensions against a schema.
    pub fn validate_for(&self, spec: &SkillSpec) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.input.len() != spec.n_inputs() || row.target.len() != spec.n_outputs() {
                return Err(Error::Shape(format!(
                    "row {i}: got {}x{} values, {} expects {}x{}",
                    row.input.len(),
                    row.target.len(),
                    spec.skill,
                    spec.n_inputs(),
                    spec.n_outputs()
                )));
            }
        }
        Ok(())
    }

    /// Per-field [min, max] over the row inputs.
    pub fn input_bounds(&self) -> Vec<(f64, f64)> {
        let dim = self.rows.first().map_or(0, |r| r.input.len());
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
        for row in &self.rows {
            for (b, &v) in bounds.iter_mut().zip(&row.input) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        bounds
    }
}

/// Targetless input points for the residual loss, plus the sampling bounds
/// that double as the model's normalization range.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet {
    pub points: Vec<Vec<f64>>,
    pub bounds: Vec<(f64, f64)>,
}

impl CollocationSet {
    /// Uniform points over `bounds`, deterministic per seed.
    pub fn sample(bounds: &[(f64, f64)], n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n)
            .map(|_| {
                bounds
                    .iter()
                    .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..hi) } else { lo })
                    .collect()
            })
            .collect();
        CollocationSet {
            points,
            bounds: bounds.to_vec(),
        }
    }

    /// No points, bounds only; what data-only skills train with.
    pub fn bounds_only(bounds: &[(f64, f64)]) -> Self {
        CollocationSet {
            points: Vec::new(),
            bounds: bounds.to_vec(),
        }
    }
}

/// Affine map of each input field to [-1, 1] from its sampling bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    mids: Vec<f64>,
    halves: Vec<f64>,
}

impl Normalizer {
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Self {
        let mids = bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
        // A constant field maps to 0 rather than dividing by zero.
        let halves = bounds
            .iter()
            .map(|&(lo, hi)| if hi > lo { 0.5 * (hi - lo) } else { 1.0 })
            .collect();
        Normalizer { mids, halves }
    }

    pub fn dim(&self) -> usize {
        self.mids.len()
    }

    pub fn normalize_into(&self, raw: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            raw.iter()
                .zip(self.mids.iter().zip(&self.halves))
                .map(|(&v, (&m, &h))| (v - m) / h),
        );
    }

    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(raw.len());
        self.normalize_into(raw, &mut out);
        out
    }

    /// Direction in normalized input space corresponding to d/d(raw field).
    /// Feeding it to the tangent pass yields derivatives with respect to
    /// the raw field despite the scaling.
    pub fn raw_axis_direction(&self, field: usize) -> Vec<f64> {
        let mut dir = vec![0.0; self.dim()];
        dir[field] = 1.0 / self.halves[field];
        dir
    }
}

/// Outcome of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    pub final_data_loss: f64,
    pub final_physics_loss: f64,
    pub iterations: usize,
    pub status: Termination,
}

/// A trained skill: schema, network, normalization bounds, and any learned
/// physical constants.
#[derive(Clone, Debug)]
pub struct SkillModel {
    pub spec: SkillSpec,
    pub net: DenseNetwork,
    /// Per-input-field sampling bounds the normalizer was built from.
    pub bounds: Vec<(f64, f64)>,
    /// Unknown physical parameters after training, in declaration order.
    pub learned_params: Vec<(String, f64)>,
    pub training_report: TrainingReport,
}

impl SkillModel {
    pub fn normalizer(&self) -> Normalizer {
        Normalizer::from_bounds(&self.bounds)
    }

    /// Physical parameter values with learned estimates substituted for the
    /// unknowns.
    pub fn effective_params(&self) -> Vec<f64> {
        let mut values = self.spec.param_values();
        for (name, value) in &self.learned_params {
            if let Some(i) = self
                .spec
                .physical_params
                .iter()
                .position(|p| p.name == name)
            {
                values[i] = *value;
            }
        }
        values
    }
}

/// A bank of trained skill models keyed by skill.
#[derive(Clone, Debug, Default)]
pub struct SkillSet {
    models: std::collections::BTreeMap<Skill, SkillModel>,
}

impl SkillSet {
    pub fn new() -> SkillSet {
        SkillSet::default()
    }

    /// Inserts a model, replacing any previous model for the same skill.
    pub fn insert(&mut self, model: SkillModel) {
        self.models.insert(model.spec.skill, model);
    }

    pub fn get(&self, skill: Skill) -> Option<&SkillModel> {
        self.models.get(&skill)
    }

    pub fn require(&self, skill: Skill) -> Result<&SkillModel> {
        self.get(skill).ok_or_else(|| Error::MissingModel {
            skill: skill.name().to_string(),
            path: format!("{}.bin", skill.name()),
        })
    }

    pub fn skills(&self) -> impl Iterator<Item = Skill> + '_ {
        self.models.keys().copied()
    }

    /// Loads `<skill>.bin` from `dir` for every requested skill. A missing
    /// file is reported with the command that would create it.
    pub fn load_dir(dir: &std::path::Path, skills: &[Skill]) -> Result<SkillSet> {
        let mut set = SkillSet::new();
        for &skill in skills {
            let path = dir.join(format!("{}.bin", skill.name()));
            if !path.is_file() {
                return Err(Error::MissingModel {
                    skill: skill.name().to_string(),
                    path: path.display().to_string(),
                });
            }
            let model = model_io::read_model(&path)?;
            if model.spec.skill != skill {
                return Err(Error::Format(format!(
                    "{} holds a model for skill '{}'",
                    path.display(),
                    model.spec.skill
                )));
            }
            set.insert(model);
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schemas_match_published_shapes() {
        let sw = build_skill(Skill::Swinging);
        assert_eq!(sw.n_inputs(), 2);
        assert_eq!(sw.n_outputs(), 2);
        assert!(sw.has_physics_loss);
        assert_eq!(sw.physical_params.len(), 1);
        assert_eq!(sw.physical_params[0].name, "l");
        assert!(!sw.physical_params[0].known);

        let bo = build_skill(Skill::Bouncing);
        assert_eq!(bo.n_inputs(), 4);
        assert_eq!(bo.n_outputs(), 2);
        assert!(!bo.has_physics_loss);

        let hi = build_skill(Skill::Hitting);
        assert_eq!(hi.n_inputs(), 3);
        assert_eq!(hi.n_outputs(), 1);
        assert!(!hi.has_physics_loss);

        let sl = build_skill(Skill::Sliding);
        assert_eq!(sl.input_fields, vec!["v_init", "t_query"]);
        assert_eq!(sl.output_fields, vec!["x", "v"]);
        assert_eq!(sl.time_index, Some(1));

        let th = build_skill(Skill::Throwing);
        assert_eq!(th.n_inputs(), 3);
        assert_eq!(th.n_outputs(), 3);
        assert_eq!(th.time_index, Some(2));
        assert!(th.physical_params.is_empty());
    }

    #[test]
    fn network_shape_is_ten_layers_of_forty() {
        let sizes = build_skill(Skill::Throwing).layer_sizes();
        assert_eq!(sizes.len(), 10);
        assert_eq!(sizes[0], 3);
        assert!(sizes[1..9].iter().all(|&s| s == 40));
        assert_eq!(sizes[9], 3);
    }

    #[test]
    fn skill_names_round_trip() {
        for s in Skill::ALL {
            assert_eq!(Skill::from_name(s.name()).unwrap(), s);
        }
        assert!(Skill::from_name("rolling").is_err());
    }

    #[test]
    fn known_param_override() {
        let spec = build_skill(Skill::Sliding)
            .with_known_param("mu", 0.35)
            .unwrap();
        assert_eq!(spec.physical_params[0].value, 0.35);
        assert!(spec.physical_params[0].known);
        assert!(spec.unknown_param_indices().is_empty());
        assert!(build_skill(Skill::Sliding).with_known_param("nu", 1.0).is_err());
    }

    #[test]
    fn data_only_strips_unknowns_from_training() {
        let spec = build_skill(Skill::Sliding).data_only();
        assert!(!spec.has_physics_loss);
        assert!(spec.unknown_param_indices().is_empty());
        assert_eq!(spec.residual_dim(), 0);
    }

    #[test]
    fn collocation_sampling_is_deterministic_and_in_bounds() {
        let bounds = [(0.5, 3.0), (0.0, 2.0)];
        let a = CollocationSet::sample(&bounds, 500, 9);
        let b = CollocationSet::sample(&bounds, 500, 9);
        assert_eq!(a, b);
        for p in &a.points {
            assert!(p[0] >= 0.5 && p[0] < 3.0);
            assert!(p[1] >= 0.0 && p[1] < 2.0);
        }
    }

    #[test]
    fn normalizer_maps_bounds_to_unit_interval() {
        let n = Normalizer::from_bounds(&[(2.0, 4.0), (-1.0, 1.0)]);
        assert_eq!(n.normalize(&[2.0, -1.0]), vec![-1.0, -1.0]);
        assert_eq!(n.normalize(&[4.0, 1.0]), vec![1.0, 1.0]);
        assert_eq!(n.normalize(&[3.0, 0.0]), vec![0.0, 0.0]);
        let dir = n.raw_axis_direction(0);
        assert_eq!(dir, vec![1.0, 0.0]);
        let n = Normalizer::from_bounds(&[(0.0, 4.0)]);
        assert_eq!(n.raw_axis_direction(0), vec![0.5]);
    }

    #[test]
    fn constant_field_normalizes_without_blowup() {
        let n = Normalizer::from_bounds(&[(0.1, 0.1)]);
        assert_eq!(n.normalize(&[0.1]), vec![0.0]);
    }
}
