//! Error and utility-gap metrics on the held-out batch.

use crate::autodiff::value;
use crate::error::Result;
use crate::problem::{Agent, Bilevel, GroundTruth, Principal};
use crate::qmc::{held_out_batch, Draws};
use crate::solver::{norm, refine_best_response, ParamVec, SolverConfig};

/// Regularizer in every denominator.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub err_a: f64,
    pub err_t: f64,
    pub gap_u1: f64,
    pub gap_u2: f64,
}

/// `‖x - x*‖ / (‖x*‖ + ε)`.
pub fn relative_distance(x: &[f64], x_star: &[f64]) -> f64 {
    let diff: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
    norm(&diff) / (norm(x_star) + EPS)
}

/// `|u* - u| / (|u*| + ε)`.
pub fn relative_gap(u: f64, u_star: f64) -> f64 {
    (u_star - u).abs() / (u_star.abs() + EPS)
}

/// Best response used for the agent gap: the closed form when the problem
/// has one, otherwise an accurate Newton solve started at `start`.
pub fn best_response<P: Bilevel>(
    problem: &P,
    t: &[f64],
    draws: &Draws,
    start: &ParamVec,
) -> Result<Vec<f64>> {
    match problem.best_response_hint(t) {
        Some(a) => Ok(a),
        None => Ok(refine_best_response(problem, t, draws, start)?.values),
    }
}

/// The four metrics of `(a, t)` against `truth`, all utilities evaluated on
/// `held_out`.
pub fn compute_metrics<P: Bilevel>(
    problem: &P,
    a: &ParamVec,
    t: &[f64],
    truth: &GroundTruth,
    held_out: &Draws,
) -> Result<Metrics> {
    let principal = Principal(problem);
    let agent = Agent(problem);
    let u1_star = value(&principal, &truth.a_star, &truth.t_star, held_out)?;
    let u1 = value(&principal, &a.values, t, held_out)?;
    let u2 = value(&agent, &a.values, t, held_out)?;
    let a_best = best_response(problem, t, held_out, a)?;
    let u2_best = value(&agent, &a_best, t, held_out)?;
    Ok(Metrics {
        err_a: relative_distance(&a.values, &truth.a_star),
        err_t: relative_distance(t, &truth.t_star),
        gap_u1: relative_gap(u1, u1_star),
        gap_u2: relative_gap(u2, u2_best),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub u1: f64,
    pub u2: f64,
    pub metrics: Option<Metrics>,
}

/// Evaluates iterates on a fixed held-out batch, optionally against a
/// reference solution.
pub struct Evaluator<'p, P> {
    problem: &'p P,
    draws: Draws,
    truth: Option<GroundTruth>,
    u1_star: f64,
}

impl<'p, P: Bilevel> Evaluator<'p, P> {
    pub fn new(problem: &'p P, draws: Draws, truth: Option<GroundTruth>) -> Result<Self> {
        let u1_star = match &truth {
            Some(g) => value(&Principal(problem), &g.a_star, &g.t_star, &draws)?,
            None => f64::NAN,
        };
        Ok(Self { problem, draws, truth, u1_star })
    }

    /// Held-out batch of `cfg.eval_size` samples drawn with `cfg.eval_seed`.
    pub fn from_config(problem: &'p P, cfg: &SolverConfig, truth: Option<GroundTruth>) -> Result<Self> {
        let dim = if problem.is_analytic() { 0 } else { problem.noise().len() };
        let batch = held_out_batch(cfg.eval_seed, dim, cfg.eval_size)?;
        let draws = problem.draws(&batch)?;
        Self::new(problem, draws, truth)
    }

    pub fn draws(&self) -> &Draws {
        &self.draws
    }

    pub fn truth(&self) -> Option<&GroundTruth> {
        self.truth.as_ref()
    }

    /// The reference principal utility re-evaluated on the held-out batch.
    pub fn u1_star(&self) -> Option<f64> {
        self.truth.as_ref().map(|_| self.u1_star)
    }

    pub fn u1(&self, a: &[f64], t: &[f64]) -> Result<f64> {
        value(&Principal(self.problem), a, t, &self.draws)
    }

    pub fn u2(&self, a: &[f64], t: &[f64]) -> Result<f64> {
        value(&Agent(self.problem), a, t, &self.draws)
    }

    pub fn evaluate(&self, a: &ParamVec, t: &[f64]) -> Result<Evaluation> {
        let u1 = self.u1(&a.values, t)?;
        let u2 = self.u2(&a.values, t)?;
        let metrics = match &self.truth {
            Some(truth) => {
                let a_best = best_response(self.problem, t, &self.draws, a)?;
                let u2_best = self.u2(&a_best, t)?;
                Some(Metrics {
                    err_a: relative_distance(&a.values, &truth.a_star),
                    err_t: relative_distance(t, &truth.t_star),
                    gap_u1: relative_gap(u1, self.u1_star),
                    gap_u2: relative_gap(u2, u2_best),
                })
            }
            None => None,
        };
        Ok(Evaluation { u1, u2, metrics })
    }
}
