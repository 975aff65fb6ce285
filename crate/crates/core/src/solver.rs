//! The bilevel loop: inner best-response ascent, implicit-differentiation
//! hypergradient, projected contract update.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{grad_a, grad_t, hvp_aa, mixed_hvp_ta, value, value_and_grad_a};
use crate::cg::{conjugate_gradient, damped, FnOperator};
use crate::error::{Error, Result};
use crate::metrics::Evaluator;
use crate::problem::{Agent, Bilevel, Principal};
use crate::qmc::{make_payload, refresh, Draws};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Agent,
    Contract,
}

/// A parameter block with elementwise box bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVec {
    pub values: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub block: Block,
}

impl ParamVec {
    /// Builds the block and projects `values` into the box.
    pub fn new(values: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>, block: Block) -> Result<Self> {
        let n = values.len();
        for len in [lower.len(), upper.len()] {
            if len != n {
                return Err(Error::Shape { expected: n, got: len });
            }
        }
        if let Some(i) = (0..n).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::InvalidConfig(format!(
                "empty box at coordinate {i}: [{}, {}]",
                lower[i], upper[i]
            )));
        }
        let mut p = Self { values, lower, upper, block };
        p.project();
        Ok(p)
    }

    pub fn unbounded(values: Vec<f64>, block: Block) -> Self {
        let n = values.len();
        Self {
            values,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            block,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn project(&mut self) {
        for ((x, &lo), &hi) in self.values.iter_mut().zip(&self.lower).zip(&self.upper) {
            *x = x.clamp(lo, hi);
        }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        let mut p = Self { values, ..self.clone() };
        p.project();
        p
    }

    pub fn is_feasible(&self) -> bool {
        self.values
            .iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((x, lo), hi)| lo <= x && x <= hi)
    }

    /// Zeroes the components of `g` that push against an active bound.
    pub fn projected_gradient(&self, g: &[f64]) -> Vec<f64> {
        g.iter()
            .enumerate()
            .map(|(i, &gi)| {
                let x = self.values[i];
                if (x >= self.upper[i] && gi > 0.0) || (x <= self.lower[i] && gi < 0.0) {
                    0.0
                } else {
                    gi
                }
            })
            .collect()
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Hyperparameters of the bilevel loop.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub eta_in: f64,
    pub t_in: usize,
    pub eps_in: f64,
    pub eta_out: f64,
    pub t_out: u64,
    pub t_cg: usize,
    pub lambda: f64,
    pub eps_cg: f64,
    pub batch_n: usize,
    pub refresh_r: u64,
    pub antithetic: bool,
    pub clip_norm: Option<f64>,
    pub train_seed: u64,
    pub eval_seed: u64,
    pub eval_size: usize,
    pub log_every: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta_in: 5e-3,
            t_in: 50,
            eps_in: 1e-4,
            eta_out: 1e-3,
            t_out: 1_000_000,
            t_cg: 20,
            lambda: 1e-4,
            eps_cg: 1e-8,
            batch_n: 1024,
            refresh_r: 100,
            antithetic: true,
            clip_norm: None,
            train_seed: 0,
            eval_seed: 1,
            eval_size: 8192,
            log_every: 100,
        }
    }
}

impl SolverConfig {
    /// Desk-scale budget for the linear environments.
    pub fn desk_linear() -> Self {
        Self { eta_out: 1e-2, t_out: 20_000, ..Self::default() }
    }

    /// Desk-scale budget for the nonlinear environments.
    pub fn desk_nonlinear() -> Self {
        Self { eta_out: 1e-3, t_out: 50_000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta_in", self.eta_in),
            ("eps_in", self.eps_in),
            ("eta_out", self.eta_out),
            ("eps_cg", self.eps_cg),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::ConfigKey {
                    key: format!("solver.{name}"),
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::ConfigKey {
                key: "solver.lambda".into(),
                reason: format!("must be non-negative, got {}", self.lambda),
            });
        }
        let counts = [
            ("t_in", self.t_in as u64),
            ("t_cg", self.t_cg as u64),
            ("batch_n", self.batch_n as u64),
            ("refresh_r", self.refresh_r),
            ("eval_size", self.eval_size as u64),
            ("log_every", self.log_every),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::ConfigKey {
                    key: format!("solver.{name}"),
                    reason: "must be at least 1".into(),
                });
            }
        }
        if self.antithetic && !self.batch_n.is_multiple_of(2) {
            return Err(Error::ConfigKey {
                key: "solver.batch_n".into(),
                reason: format!("antithetic pairing needs an even batch, got {}", self.batch_n),
            });
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::ConfigKey {
                    key: "solver.clip_norm".into(),
                    reason: format!("must be positive, got {c}"),
                });
            }
        }
        Ok(())
    }
}

/// Standard normal initial action and contract, projected into their boxes.
pub fn random_init<P: Bilevel>(problem: &P, seed: u64) -> Result<(ParamVec, ParamVec)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let a = draw(problem.action_dim());
    let t = draw(problem.contract_dim());
    let (alo, ahi) = problem.action_bounds();
    let (tlo, thi) = problem.contract_bounds();
    Ok((ParamVec::new(a, alo, ahi, Block::Agent)?, ParamVec::new(t, tlo, thi, Block::Contract)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerReport {
    pub action: ParamVec,
    /// Number of ascent steps taken.
    pub iterations: usize,
    /// Gradient norm at the last stationarity check.
    pub grad_norm: f64,
}

/// Projected gradient ascent on the agent's sample-average utility, reusing
/// the same draws at every step.
pub fn inner_ascent<P: Bilevel>(
    problem: &P,
    a0: &ParamVec,
    t: &[f64],
    draws: &Draws,
    cfg: &SolverConfig,
) -> Result<InnerReport> {
    let agent = Agent(problem);
    let mut a = a0.clone();
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    for step in 0..cfg.t_in {
        let g = grad_a(&agent, &a.values, t, draws).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFiniteStep { step },
            other => other,
        })?;
        grad_norm = norm(&g);
        if grad_norm <= cfg.eps_in {
            break;
        }
        for (x, gi) in a.values.iter_mut().zip(&g) {
            *x += cfg.eta_in * gi;
        }
        a.project();
        iterations += 1;
    }
    Ok(InnerReport { action: a, iterations, grad_norm })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypergradReport {
    pub grad: Vec<f64>,
    /// Norm before clipping.
    pub norm: f64,
    pub cg_iterations: usize,
    pub cg_converged: bool,
    /// Damping actually used (after a curvature retry this is `10 λ`).
    pub lambda: f64,
}

/// Total derivative of the principal's utility through the agent's best
/// response, at an approximately stationary action `a`.
///
/// Solves `(-H_aa + λI) v = -∇_a u1` by CG and returns
/// `∇_t u1 - ∇_t(∇_a u2 · v)`.
pub fn hypergrad<P: Bilevel>(
    problem: &P,
    a: &[f64],
    t: &[f64],
    draws: &Draws,
    cfg: &SolverConfig,
) -> Result<HypergradReport> {
    hypergrad_with(problem, a, t, draws, cfg.lambda, cfg.t_cg, cfg.eps_cg, cfg.clip_norm)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn hypergrad_with<P: Bilevel>(
    problem: &P,
    a: &[f64],
    t: &[f64],
    draws: &Draws,
    lambda: f64,
    t_cg: usize,
    eps_cg: f64,
    clip_norm: Option<f64>,
) -> Result<HypergradReport> {
    let principal = Principal(problem);
    let agent = Agent(problem);
    let g_a = grad_a(&principal, a, t, draws)?;
    let g_t = grad_t(&principal, a, t, draws)?;
    let rhs: Vec<f64> = g_a.iter().map(|x| -x).collect();
    let solve = |lambda: f64| {
        let hvp = FnOperator::new(a.len(), |v: &[f64]| hvp_aa(&agent, a, t, draws, v));
        conjugate_gradient(&damped(hvp, lambda), &rhs, t_cg, eps_cg)
    };
    let (report, lambda) = match solve(lambda) {
        Err(Error::Curvature { .. }) => {
            let retry = lambda * 10.0;
            (solve(retry)?, retry)
        }
        other => (other?, lambda),
    };
    let mixed = mixed_hvp_ta(&agent, a, t, draws, &report.solution)?;
    let mut grad: Vec<f64> = g_t.iter().zip(&mixed).map(|(g, m)| g - m).collect();
    let n = norm(&grad);
    if let Some(c) = clip_norm {
        if n > c {
            grad.iter_mut().for_each(|g| *g *= c / n);
        }
    }
    Ok(HypergradReport {
        grad,
        norm: n,
        cg_iterations: report.iterations,
        cg_converged: report.converged,
        lambda,
    })
}

/// Gradient step on the contract. Coordinates sitting on a bound whose
/// gradient points outward are held; everything is projected afterwards.
pub fn update_contract(t: &ParamVec, h: &[f64], eta_out: f64) -> ParamVec {
    let mut next = t.clone();
    for (i, &hi) in h.iter().enumerate() {
        let x = t.values[i];
        let pinned = (x >= t.upper[i] && hi > 0.0) || (x <= t.lower[i] && hi < 0.0);
        if !pinned {
            next.values[i] = x + eta_out * hi;
        }
    }
    next.project();
    next
}

/// Accurate best response by damped projected Newton steps with a
/// backtracking line search. Used for evaluation, not inside the loop.
pub fn refine_best_response<P: Bilevel>(
    problem: &P,
    t: &[f64],
    draws: &Draws,
    start: &ParamVec,
) -> Result<ParamVec> {
    const MAX_ITER: usize = 100;
    const TOL: f64 = 1e-12;
    let agent = Agent(problem);
    let mut a = start.clone();
    let (mut u, mut g) = value_and_grad_a(&agent, &a.values, t, draws)?;
    for _ in 0..MAX_ITER {
        let pg = a.projected_gradient(&g);
        if norm(&pg) <= TOL {
            break;
        }
        let hvp = FnOperator::new(a.len(), |v: &[f64]| hvp_aa(&agent, &a.values, t, draws, v));
        let dir = match conjugate_gradient(&damped(hvp, 0.0), &pg, 4 * a.len() + 4, 1e-14) {
            Ok(rep) => rep.solution,
            Err(Error::Curvature { .. }) => pg.clone(),
            Err(e) => return Err(e),
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand =
                a.with_values(a.values.iter().zip(&dir).map(|(x, d)| x + step * d).collect());
            let uc = value(&agent, &cand.values, t, draws)?;
            if uc >= u {
                accepted = Some((cand, uc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, uc)) = accepted else { break };
        if cand == a {
            break;
        }
        a = cand;
        u = uc;
        g = value_and_grad_a(&agent, &a.values, t, draws)?.1;
    }
    Ok(a)
}

/// One logged row of a run, evaluated on the held-out batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub u1: f64,
    pub u2: f64,
    pub metrics: Option<crate::metrics::Metrics>,
    pub hgrad_norm: Option<f64>,
    pub inner_iters: usize,
    pub cg_iters: usize,
    pub cg_converged: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub t: ParamVec,
    pub a: ParamVec,
    pub trace: RunTrace,
    /// The final state evaluated on the held-out batch. Equals the last trace
    /// row whenever at least one step ran.
    pub summary: TraceRow,
    /// Outer steps after which `a` or `t` left its box. Always zero unless
    /// projection is broken.
    pub infeasible_steps: u64,
}

/// Runs the outer loop from `(t0, a0)`.
///
/// Every step refreshes the training payload on schedule, warm-starts the
/// inner ascent from the previous action, and takes one hypergradient step
/// on the contract. After step `k + 1` is complete the state is logged when
/// `(k + 1)` is a multiple of `log_every` or is the last step; rows are
/// passed to `sink` as they are produced.
pub fn outer_loop<P: Bilevel>(
    problem: &P,
    t0: ParamVec,
    a0: ParamVec,
    cfg: &SolverConfig,
    evaluator: &Evaluator<'_, P>,
    sink: &mut dyn FnMut(&TraceRow) -> Result<()>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    if t0.len() != problem.contract_dim() {
        return Err(Error::Shape { expected: problem.contract_dim(), got: t0.len() });
    }
    if a0.len() != problem.action_dim() {
        return Err(Error::Shape { expected: problem.action_dim(), got: a0.len() });
    }
    let mut t = t0;
    let mut a = a0;
    let mut trace = RunTrace::default();
    let mut infeasible_steps = 0;

    let noise_dim = if problem.is_analytic() { 0 } else { problem.noise().len() };
    let mut payload = make_payload(cfg.train_seed, noise_dim, cfg.batch_n, cfg.antithetic)?;
    let mut draws = problem.draws(&payload)?;

    for k in 0..cfg.t_out {
        let epoch = payload.epoch;
        payload = refresh(payload, k, cfg.refresh_r)?;
        if payload.epoch != epoch {
            draws = problem.draws(&payload)?;
        }
        let inner = inner_ascent(problem, &a, &t.values, &draws, cfg)?;
        a = inner.action;
        let h = hypergrad(problem, &a.values, &t.values, &draws, cfg)?;
        t = update_contract(&t, &h.grad, cfg.eta_out);
        if !(a.is_feasible() && t.is_feasible()) {
            infeasible_steps += 1;
        }
        let done = k + 1;
        if done % cfg.log_every == 0 || done == cfg.t_out {
            let eval = evaluator.evaluate(&a, &t.values)?;
            let row = TraceRow {
                step: done,
                u1: eval.u1,
                u2: eval.u2,
                metrics: eval.metrics,
                hgrad_norm: Some(h.norm),
                inner_iters: inner.iterations,
                cg_iters: h.cg_iterations,
                cg_converged: Some(h.cg_converged),
            };
            sink(&row)?;
            trace.rows.push(row);
        }
    }

    let summary = match trace.rows.last() {
        Some(row) => row.clone(),
        None => {
            let eval = evaluator.evaluate(&a, &t.values)?;
            TraceRow {
                step: 0,
                u1: eval.u1,
                u2: eval.u2,
                metrics: eval.metrics,
                hgrad_norm: None,
                inner_iters: 0,
                cg_iters: 0,
                cg_converged: None,
            }
        }
    };
    Ok(RunOutcome { t, a, trace, summary, infeasible_steps })
}
