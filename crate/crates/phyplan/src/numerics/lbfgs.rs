//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Standard two-loop recursion over the last `memory` curvature pairs, with
//! the initial Hessian scaled by (s.y)/(y.y). The line search brackets by
//! doubling and zooms by cubic interpolation, bounded by a fixed evaluation
//! budget; on failure the best improving trial (if any) is taken and the
//! run stops with a status flag rather than aborting.

use std::collections::VecDeque;

use crate::numerics::objective::Objective;

/// L-BFGS settings.
#[derive(Clone, Debug)]
pub struct LBFGSConfig {
    /// Curvature pairs kept for the two-loop recursion.
    pub memory: usize,
    /// Outer iteration budget.
    pub max_iterations: usize,
    /// Stop once the gradient infinity norm drops below this.
    pub gradient_tolerance: f64,
    /// Trial step length once curvature information exists.
    pub initial_step: f64,
    /// Sufficient-decrease constant of the Wolfe conditions.
    pub wolfe_c1: f64,
    /// Curvature constant of the Wolfe conditions.
    pub wolfe_c2: f64,
    /// Scales the trial step while the memory is empty (the first iteration,
    /// when the raw negative gradient sets the direction's scale).
    pub learning_rate: f64,
}

impl Default for LBFGSConfig {
    fn default() -> Self {
        LBFGSConfig {
            memory: 10,
            max_iterations: 6400,
            gradient_tolerance: 1e-10,
            initial_step: 1.0,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            learning_rate: 0.01,
        }
    }
}

/// Why the minimizer stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Gradient norm fell below the tolerance.
    Converged,
    /// Iteration budget exhausted.
    MaxIterations,
    /// No acceptable step found; best point so far returned.
    LineSearchFailed,
    /// Objective or gradient became non-finite; last finite point returned.
    NonFinite,
}

/// Minimizer output.
#[derive(Clone, Debug)]
pub struct MinimizeResult {
    /// Best parameters found.
    pub params: Vec<f64>,
    /// Objective value after each accepted step; non-increasing.
    pub loss_history: Vec<f64>,
    /// Stop reason.
    pub status: Termination,
    /// Objective at `params` (initial value if no step was accepted).
    pub final_loss: f64,
}

const MAX_LINE_EVALS: usize = 30;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion; returns the descent direction -H.g.
fn two_loop_direction(g: &[f64], pairs: &VecDeque<CurvaturePair>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for p in pairs.iter().rev() {
        let alpha = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= alpha * yi;
        }
        alphas.push(alpha);
    }
    if let Some(last) = pairs.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for (p, alpha) in pairs.iter().zip(alphas.iter().rev()) {
        let beta = p.rho * dot(&p.y, &q);
        for (qi, si) in q.iter_mut().zip(&p.s) {
            *qi += (alpha - beta) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

struct Trial {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    dg: f64,
}

enum SearchOutcome {
    Accepted(Trial),
    /// Wolfe conditions unmet; carries the lowest finite trial, if any beat
    /// the starting value.
    Failed(Option<Trial>),
}

/// Strong-Wolfe line search along `d` from `x` (Nocedal & Wright 3.5/3.6).
fn line_search<O: Objective + ?Sized>(
    objective: &O,
    x: &[f64],
    d: &[f64],
    f0: f64,
    dg0: f64,
    first_alpha: f64,
    c1: f64,
    c2: f64,
) -> SearchOutcome {
    let mut evals = 0;
    let mut best: Option<Trial> = None;
    let probe = |alpha: f64, evals: &mut usize, best: &mut Option<Trial>| -> Trial {
        *evals += 1;
        let xt: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
        let (f, g) = objective.evaluate(&xt);
        let dg = dot(&g, d);
        if f.is_finite() && f < best.as_ref().map_or(f0, |b| b.f) {
            *best = Some(Trial {
                alpha,
                f,
                g: g.clone(),
                dg,
            });
        }
        Trial { alpha, f, g, dg }
    };
    let armijo = |alpha: f64, f: f64| f <= f0 + c1 * alpha * dg0;
    let strong = |dg: f64| dg.abs() <= -c2 * dg0;

    // Bracketing phase: grow alpha until the minimum is bracketed.
    let mut prev = Trial {
        alpha: 0.0,
        f: f0,
        g: Vec::new(),
        dg: dg0,
    };
    let mut alpha = first_alpha;
    let (mut lo, mut hi) = loop {
        if evals >= MAX_LINE_EVALS {
            return SearchOutcome::Failed(best);
        }
        let t = probe(alpha, &mut evals, &mut best);
        if !t.f.is_finite() || !armijo(t.alpha, t.f) || (t.f >= prev.f && prev.alpha > 0.0) {
            break (prev, t);
        }
        if strong(t.dg) {
            return SearchOutcome::Accepted(t);
        }
        if t.dg >= 0.0 {
            break (t, prev);
        }
        alpha = t.alpha * 2.0;
        prev = t;
    };

    // Zoom phase: lo always satisfies Armijo with the lowest value seen.
    while evals < MAX_LINE_EVALS {
        let width = (hi.alpha - lo.alpha).abs();
        if width <= 1e-14 * lo.alpha.abs().max(1.0) {
            break;
        }
        let mut alpha = cubic_minimizer(&lo, &hi);
        let (a_min, a_max) = if lo.alpha < hi.alpha {
            (lo.alpha, hi.alpha)
        } else {
            (hi.alpha, lo.alpha)
        };
        let margin = 0.1 * width;
        if !alpha.is_finite() || alpha <= a_min + margin || alpha >= a_max - margin {
            alpha = 0.5 * (lo.alpha + hi.alpha);
        }
        let t = probe(alpha, &mut evals, &mut best);
        if !t.f.is_finite() || !armijo(t.alpha, t.f) || t.f >= lo.f {
            hi = t;
        } else {
            if strong(t.dg) {
                return SearchOutcome::Accepted(t);
            }
            if t.dg * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
    }
    SearchOutcome::Failed(best)
}

/// Minimizer of the cubic through two points with values and derivatives.
fn cubic_minimizer(a: &Trial, b: &Trial) -> f64 {
    let d1 = a.dg + b.dg - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.dg * b.dg;
    if disc < 0.0 {
        return f64::NAN;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    b.alpha - (b.alpha - a.alpha) * (b.dg + d2 - d1) / (b.dg - a.dg + 2.0 * d2)
}

/// Minimizes `objective` from `init_params`.
///
/// The loss history records the value after each accepted step and is
/// non-increasing; `max_iterations = 0` returns the start point untouched.
pub fn lbfgs_minimize<O: Objective + ?Sized>(
    objective: &O,
    init_params: &[f64],
    cfg: &LBFGSConfig,
) -> MinimizeResult {
    let mut x = init_params.to_vec();
    let (mut f, mut g) = objective.evaluate(&x);
    let mut history = Vec::new();
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return MinimizeResult {
            params: x,
            loss_history: history,
            status: Termination::NonFinite,
            final_loss: f,
        };
    }
    let mut pairs: VecDeque<CurvaturePair> = VecDeque::new();
    let mut status = Termination::MaxIterations;
    for _ in 0..cfg.max_iterations {
        if inf_norm(&g) < cfg.gradient_tolerance {
            status = Termination::Converged;
            break;
        }
        let mut d = two_loop_direction(&g, &pairs);
        let mut dg = dot(&g, &d);
        if dg >= 0.0 {
            // Stale curvature produced a non-descent direction; restart
            // from steepest descent.
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
            dg = -dot(&g, &g);
        }
        let first_alpha = if pairs.is_empty() {
            cfg.learning_rate * cfg.initial_step
        } else {
            cfg.initial_step
        };
        let accepted = match line_search(
            objective,
            &x,
            &d,
            f,
            dg,
            first_alpha,
            cfg.wolfe_c1,
            cfg.wolfe_c2,
        ) {
            SearchOutcome::Accepted(t) => t,
            SearchOutcome::Failed(best) => {
                if let Some(t) = best {
                    for (xi, di) in x.iter_mut().zip(&d) {
                        *xi += t.alpha * di;
                    }
                    f = t.f;
                    history.push(f);
                }
                status = Termination::LineSearchFailed;
                break;
            }
        };
        let x_new: Vec<f64> = x
            .iter()
            .zip(&d)
            .map(|(xi, di)| xi + accepted.alpha * di)
            .collect();
        if accepted.g.iter().any(|v| !v.is_finite()) {
            status = Termination::NonFinite;
            break;
        }
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = accepted.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * inf_norm(&s) * inf_norm(&y) && sy > 0.0 {
            pairs.push_back(CurvaturePair {
                s,
                y,
                rho: 1.0 / sy,
            });
            if pairs.len() > cfg.memory.max(1) {
                pairs.pop_front();
            }
        }
        x = x_new;
        f = accepted.f;
        g = accepted.g;
        history.push(f);
    }
    if status == Termination::MaxIterations && inf_norm(&g) < cfg.gradient_tolerance {
        status = Termination::Converged;
    }
    MinimizeResult {
        params: x,
        loss_history: history,
        status,
        final_loss: f,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::objective::FnObjective;

    fn assert_non_increasing(h: &[f64]) {
        for w in h.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "history increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn quadratic_converges_in_few_iterations() {
        let c = [3.0, -1.0];
        let obj = FnObjective(move |p: &[f64]| {
            let loss = p.iter().zip(&c).map(|(x, ci)| (x - ci) * (x - ci)).sum();
            let grad = p.iter().zip(&c).map(|(x, ci)| 2.0 * (x - ci)).collect();
            (loss, grad)
        });
        let res = lbfgs_minimize(&obj, &[0.0, 0.0], &LBFGSConfig::default());
        assert!(res.loss_history.len() <= 5, "took {} steps", res.loss_history.len());
        assert!((res.params[0] - 3.0).abs() < 1e-8);
        assert!((res.params[1] + 1.0).abs() < 1e-8);
        assert_eq!(res.status, Termination::Converged);
        assert_non_increasing(&res.loss_history);
    }

    #[test]
    fn rosenbrock_reaches_minimum() {
        let obj = FnObjective(|p: &[f64]| {
            let (x, y) = (p[0], p[1]);
            let loss = (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2);
            let gx = -2.0 * (1.0 - x) - 400.0 * x * (y - x * x);
            let gy = 200.0 * (y - x * x);
            (loss, vec![gx, gy])
        });
        let cfg = LBFGSConfig {
            max_iterations: 200,
            gradient_tolerance: 0.0,
            ..LBFGSConfig::default()
        };
        let res = lbfgs_minimize(&obj, &[-1.2, 1.0], &cfg);
        assert!(res.final_loss < 1e-6, "final loss {}", res.final_loss);
        assert!((res.params[0] - 1.0).abs() < 1e-2);
        assert_non_increasing(&res.loss_history);
    }

    #[test]
    fn zero_iterations_returns_init() {
        let obj = FnObjective(|p: &[f64]| (p[0] * p[0], vec![2.0 * p[0]]));
        let cfg = LBFGSConfig {
            max_iterations: 0,
            ..LBFGSConfig::default()
        };
        let res = lbfgs_minimize(&obj, &[7.0], &cfg);
        assert_eq!(res.params, vec![7.0]);
        assert!(res.loss_history.is_empty());
    }

    #[test]
    fn convex_quadratic_reaches_tight_gradient_norm() {
        // Ill-scaled diagonal quadratic; gradient must still hit 1e-10.
        let scales = [1.0, 10.0, 100.0, 0.5, 3.0];
        let obj = FnObjective(move |p: &[f64]| {
            let loss = p.iter().zip(&scales).map(|(x, s)| s * x * x).sum();
            let grad = p.iter().zip(&scales).map(|(x, s)| 2.0 * s * x).collect();
            (loss, grad)
        });
        let res = lbfgs_minimize(&obj, &[1.0, -2.0, 0.7, 4.0, -0.1], &LBFGSConfig::default());
        assert_eq!(res.status, Termination::Converged);
        assert_non_increasing(&res.loss_history);
    }

    #[test]
    fn kink_stops_with_failure_flag_and_progress() {
        // |x| has no point satisfying the strong curvature condition near
        // its kink; the search must bail out with its best trial.
        let obj = FnObjective(|p: &[f64]| (p[0].abs(), vec![p[0].signum()]));
        let res = lbfgs_minimize(&obj, &[1.0], &LBFGSConfig::default());
        assert_eq!(res.status, Termination::LineSearchFailed);
        assert!(res.final_loss <= 1.0);
        assert_non_increasing(&res.loss_history);
    }

    #[test]
    fn non_finite_at_init_flags_immediately() {
        let obj = FnObjective(|_: &[f64]| (f64::NAN, vec![0.0]));
        let res = lbfgs_minimize(&obj, &[1.0], &LBFGSConfig::default());
        assert_eq!(res.status, Termination::NonFinite);
        assert!(res.loss_history.is_empty());
    }
}
