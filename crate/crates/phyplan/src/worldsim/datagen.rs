//! Supervised training data drawn from the ground-truth oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::skills::{build_skill, DataRow, Dataset, Provenance, Skill};
use crate::worldsim::oracle::oracle_predict;
use crate::{Error, Result, GRAVITY};

/// Fraction of the stopping time beyond which no sliding sample is drawn,
/// keeping every row strictly inside the moving regime the ODE describes.
const SLIDE_REGIME_MARGIN: f64 = 0.98;

/// Canonical sampling ranges per skill, one `(lo, hi)` pair per input
/// field in schema order. Wide enough, with margin, to cover every query
/// the default-scene task rollouts make, so models trained on them only
/// interpolate during planning.
pub fn training_bounds(skill: Skill) -> Vec<(f64, f64)> {
    match skill {
        Skill::Swinging => vec![(0.05, 1.5), (0.0, 0.8)],
        Skill::Sliding => vec![(0.05, 3.2), (0.0, 1.8)],
        Skill::Throwing => vec![(-6.0, 6.0), (-6.0, 6.0), (0.0, 1.5)],
        Skill::Bouncing => vec![(0.5, 1.0), (0.2, 1.35), (-7.0, 0.0), (-1.0, 1.0)],
        Skill::Hitting => vec![(0.02, 0.3), (0.02, 0.3), (0.05, 3.2)],
    }
}

/// The scene constants the oracle labels `skill` with: swinging `[l]`,
/// sliding `[mu]`, hitting `[e_c]`, others none.
pub fn oracle_params(skill: Skill, geometry: &crate::worldsim::Geometry) -> Vec<f64> {
    match skill {
        Skill::Swinging => vec![geometry.pendulum_length],
        Skill::Sliding => vec![geometry.mu],
        Skill::Hitting => vec![geometry.e_c],
        Skill::Throwing | Skill::Bouncing => Vec::new(),
    }
}

/// Draws `n` oracle-labelled rows with inputs uniform over `bounds` (one
/// `(lo, hi)` pair per input field, query time included) and Gaussian noise
/// of `noise_sigma` on each target component. `params` are the oracle's
/// physical constants for the skill: swinging `[l]`, sliding `[mu]`,
/// hitting `[e_c]`, others empty.
///
/// Sliding rows condition the time draw on the sampled speed so that the
/// target is taken before the object stops; the published dynamics only
/// govern the moving phase.
pub fn generate_dataset(
    skill: Skill,
    params: &[f64],
    n: usize,
    bounds: &[(f64, f64)],
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    let spec = build_skill(skill);
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    if bounds.len() != spec.n_inputs() {
        return Err(Error::Shape(format!(
            "'{skill}' takes {} input fields, got {} bound pairs",
            spec.n_inputs(),
            bounds.len()
        )));
    }
    for (field, &(lo, hi)) in spec.input_fields.iter().zip(bounds) {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "degenerate bounds [{lo}, {hi}] for field '{field}'"
            )));
        }
    }
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(Error::Config(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (noise_sigma > 0.0)
        .then(|| Normal::new(0.0, noise_sigma).expect("sigma checked positive"));
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut input: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect();
        if skill == Skill::Sliding {
            let mu = *params.first().ok_or_else(|| {
                Error::Shape("sliding oracle takes one physical constant".into())
            })?;
            if mu > 0.0 {
                let (t_lo, t_hi) = bounds[1];
                let t_cap = (SLIDE_REGIME_MARGIN * input[0] / (mu * GRAVITY)).min(t_hi);
                input[1] = if t_cap > t_lo { rng.gen_range(t_lo..t_cap) } else { t_lo };
            }
        }
        let (init, t) = match spec.time_index {
            Some(ti) => {
                let mut init = input.clone();
                let t = init.remove(ti);
                (init, t)
            }
            None => (input.clone(), 0.0),
        };
        let mut target = oracle_predict(skill, params, &init, t)?;
        if let Some(dist) = &noise {
            for y in &mut target {
                *y += dist.sample(&mut rng);
            }
        }
        rows.push(DataRow { input, target });
    }
    Ok(Dataset {
        rows,
        provenance: Some(Provenance {
            noise_sigma,
            seed,
            generator: format!("oracle:{}", skill.name()),
        }),
    })
}
