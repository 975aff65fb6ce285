//! The acceptance suite behind `validate`.
//!
//! Each criterion returns a [`CriterionReport`] holding one [`Check`] per
//! measured quantity. [`run_suite`] runs them in order and threads the
//! feasibility records of the solver runs into the final criterion.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{grad_a, grad_t, hvp_aa, mixed_hvp_ta, value, SampleFn, Scalar};
use crate::bench::{run_with_writers, BenchConfig};
use crate::cg::{conjugate_gradient, dot, DenseOperator};
use crate::environments::{closed_form, EnvId, EnvSpec, Environment};
use crate::error::Result;
use crate::oracle::{grid_search_with, GridSpec, OracleCache, OracleOptions};
use crate::problem::{Agent, Bilevel, GroundTruth, Principal};
use crate::qmc::{make_payload, DirectionTable, Draws, NoiseKind, Sobol};
use crate::metrics::Evaluator;
use crate::solver::{hypergrad_with, norm, refine_best_response, Block, ParamVec, RunOutcome};

/// One measured quantity against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= tolerance` (NaN fails).
    pub fn at_most(label: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { label: label.into(), value, tolerance, passed: value <= tolerance }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub id: &'static str,
    pub title: &'static str,
    pub checks: Vec<Check>,
    /// Diagnostics printed under the checks; they do not affect the verdict.
    pub notes: Vec<String>,
    /// Set when the criterion could not be evaluated at all.
    pub error: Option<String>,
    pub elapsed: Duration,
}

impl CriterionReport {
    fn new(id: &'static str, title: &'static str) -> Self {
        Self { id, title, checks: Vec::new(), notes: Vec::new(), error: None, elapsed: Duration::ZERO }
    }

    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    /// `P1 PASS closed-form recovery, analytic (6/6 checks, 0.4 s)`.
    pub fn summary_line(&self) -> String {
        let ok = self.checks.iter().filter(|c| c.passed).count();
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let mut line = format!(
            "{} {status} {} ({ok}/{} checks, {:.1} s)",
            self.id,
            self.title,
            self.checks.len(),
            self.elapsed.as_secs_f64()
        );
        if let Some(e) = &self.error {
            line.push_str(&format!(" error: {e}"));
        }
        line
    }

    fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    fn fail(mut self, err: impl fmt::Display) -> Self {
        self.error = Some(err.to_string());
        self
    }
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.summary_line())?;
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            writeln!(f, "    {mark} {:<44} {:>12.4e} <= {:.1e}", c.label, c.value, c.tolerance)?;
        }
        for note in &self.notes {
            writeln!(f, "    note {note}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteReport {
    pub criteria: Vec<CriterionReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(CriterionReport::passed)
    }

    pub fn get(&self, id: &str) -> Option<&CriterionReport> {
        self.criteria.iter().find(|c| c.id == id)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.criteria {
            write!(f, "{c}")?;
        }
        let failed = self.criteria.iter().filter(|c| !c.passed()).count();
        writeln!(f, "{} criteria, {failed} failed", self.criteria.len())
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    /// Table used by the Sobol reference check only.
    pub directions: DirectionTable,
    /// Damping for the fixed-point check.
    pub fixed_point_lambda: f64,
    pub oracle: OracleOptions,
    /// Oracle cache for the nonlinear references. The timed logistic oracle
    /// is always recomputed.
    pub cache: Option<PathBuf>,
    /// Called with each finished criterion.
    pub progress: Option<fn(&CriterionReport)>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            directions: DirectionTable::joe_kuo(),
            fixed_point_lambda: 1e-6,
            oracle: OracleOptions::default(),
            cache: None,
            progress: None,
        }
    }
}

/// Feasibility of one solver run, collected for the final criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub label: String,
    pub infeasible_steps: u64,
    pub final_feasible: bool,
}

impl Feasibility {
    fn of(label: impl Into<String>, outcome: &RunOutcome) -> Self {
        Self {
            label: label.into(),
            infeasible_steps: outcome.infeasible_steps,
            final_feasible: outcome.a.is_feasible() && outcome.t.is_feasible(),
        }
    }
}

fn timed(mut f: impl FnMut() -> CriterionReport) -> CriterionReport {
    let start = Instant::now();
    let mut report = f();
    report.elapsed = start.elapsed();
    report
}

/// Runs every criterion and returns the full table.
pub fn run_suite(options: &SuiteOptions) -> SuiteReport {
    let mut report = SuiteReport::default();
    let mut feasibility = Vec::new();
    let mut truths = HashMap::new();
    let finish = |r: CriterionReport, report: &mut SuiteReport| {
        if let Some(cb) = options.progress {
            cb(&r);
        }
        report.criteria.push(r);
    };

    finish(timed(|| sobol_reference(&options.directions)), &mut report);
    finish(timed(|| closed_form_recovery(&mut feasibility)), &mut report);
    // sampled recovery and determinism share their first run
    let mut sampled = None;
    finish(timed(|| sampled_recovery(&mut feasibility, &mut sampled)), &mut report);
    finish(timed(hypergradient_oracle), &mut report);
    finish(timed(cg_correctness), &mut report);
    finish(timed(derivative_suite), &mut report);
    finish(timed(|| crn_determinism(sampled.as_deref())), &mut report);
    finish(timed(|| oracle_sanity(options, &mut truths)), &mut report);
    finish(timed(|| utility_consistency(options, &mut truths, &mut feasibility)), &mut report);
    finish(
        timed(|| feasibility_and_fixed_points(&feasibility, options.fixed_point_lambda)),
        &mut report,
    );
    report
}

/// Reference rows of the 16-dimensional Sobol sequence as 30-bit integers
/// (`value * 2^30`), from an independent Joe–Kuo implementation. Indices
/// count from 1 with point 0 skipped.
pub const SOBOL_REFERENCE: [(u32, [u32; 16]); 5] = [
    (2, [805306368, 268435456, 268435456, 268435456, 805306368, 805306368, 268435456, 805306368, 805306368, 805306368, 805306368, 805306368, 268435456, 268435456, 805306368, 268435456]),
    (4, [402653184, 402653184, 671088640, 939524096, 402653184, 134217728, 402653184, 939524096, 939524096, 671088640, 939524096, 402653184, 402653184, 671088640, 402653184, 939524096]),
    (8, [201326592, 335544320, 1006632960, 469762048, 603979776, 335544320, 469762048, 1006632960, 1006632960, 335544320, 738197504, 67108864, 1006632960, 1006632960, 872415232, 1006632960]),
    (100, [444596224, 276824064, 830472192, 780140544, 947912704, 796917760, 25165824, 511705088, 679477248, 746586112, 494927872, 729808896, 511705088, 914358272, 343932928, 528482304]),
    (1000, [235929600, 103809024, 556793856, 726663168, 300941312, 974127104, 49283072, 965738496, 537919488, 74448896, 91226112, 273678336, 173015040, 412090368, 154140672, 397410304]),
];

/// Sobol points generated from `table` against the reference rows.
pub fn sobol_reference(table: &DirectionTable) -> CriterionReport {
    let r = CriterionReport::new("Q1", "Sobol reference rows");
    let pts = match Sobol::with_table(16, table).and_then(|s| s.points(1000, 0)) {
        Ok(p) => p,
        Err(e) => return r.fail(e),
    };
    let mut r = r;
    for (index, expected) in SOBOL_REFERENCE {
        let row = pts.row(index as usize - 1);
        let worst = row
            .iter()
            .zip(expected)
            .map(|(&u, e)| (u - f64::from(e) / f64::from(1u32 << 30)).abs())
            .fold(0.0, f64::max);
        r.push(Check::at_most(format!("point {index} max deviation"), worst, 0.0));
    }
    r
}

fn linear_ids() -> impl Iterator<Item = EnvId> {
    EnvId::ALL.into_iter().filter(|id| id.is_linear())
}

fn nonlinear_ids() -> impl Iterator<Item = EnvId> {
    EnvId::ALL.into_iter().filter(|id| !id.is_linear())
}

/// Runs a config with an explicit reference, keeping the trace in memory.
fn run_in_memory(cfg: &BenchConfig, truth: GroundTruth) -> Result<(RunOutcome, Vec<u8>)> {
    let mut trace = Vec::new();
    let report = run_with_writers(cfg, Some(truth), &mut trace, &mut std::io::sink())?;
    Ok((report.outcome, trace))
}

fn metric_checks(r: &mut CriterionReport, label: &str, outcome: &RunOutcome, limits: &[(&str, f64)]) {
    let Some(m) = outcome.summary.metrics else {
        r.push(Check::at_most(format!("{label} metrics present"), f64::NAN, 0.0));
        return;
    };
    for &(name, tol) in limits {
        let v = match name {
            "err_t" => m.err_t,
            "err_a" => m.err_a,
            "gap_u1" => m.gap_u1,
            _ => m.gap_u2,
        };
        r.push(Check::at_most(format!("{label} {name}"), v, tol));
    }
}

/// Desk-profile runs on the six analytic linear settings from a random
/// normal start.
pub fn closed_form_recovery(feasibility: &mut Vec<Feasibility>) -> CriterionReport {
    let mut r = CriterionReport::new("P1", "closed-form recovery, analytic");
    for id in linear_ids() {
        let cfg = BenchConfig::new(EnvSpec::new(id));
        let result = cfg.env.build().and_then(|env| closed_form(&env)).and_then(|g| run_in_memory(&cfg, g));
        match result {
            Ok((outcome, _)) => {
                metric_checks(&mut r, id.name(), &outcome, &[("err_t", 1e-2), ("err_a", 1e-2), ("gap_u1", 1e-3)]);
                feasibility.push(Feasibility::of(format!("P1 {id}"), &outcome));
            }
            Err(e) => return r.fail(format!("{id}: {e}")),
        }
    }
    r
}

fn sampled_hm() -> BenchConfig {
    BenchConfig::new(EnvSpec::new(EnvId::Hm).sampled(true))
}

/// HM through the sampled path, batch 1024 antithetic, held-out 8192. The
/// trace bytes are kept for the determinism check.
pub fn sampled_recovery(
    feasibility: &mut Vec<Feasibility>,
    trace: &mut Option<Vec<u8>>,
) -> CriterionReport {
    let mut r = CriterionReport::new("P2", "closed-form recovery, sampled");
    let cfg = sampled_hm();
    let truth = match cfg.env.build().and_then(|env| closed_form(&env)) {
        Ok(g) => g,
        Err(e) => return r.fail(e),
    };
    match run_in_memory(&cfg, truth) {
        Ok((outcome, bytes)) => {
            metric_checks(&mut r, "hm sampled", &outcome, &[("err_t", 2e-2), ("gap_u1", 5e-3)]);
            feasibility.push(Feasibility::of("P2 hm sampled", &outcome));
            *trace = Some(bytes);
            r
        }
        Err(e) => r.fail(e),
    }
}

/// `u2 = -(a - t)^2 / 2`, `u1 = a t`. The best response is `a = t`, so the
/// total derivative of `u1` is `2t`.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticToy;

impl Bilevel for QuadraticToy {
    fn action_dim(&self) -> usize {
        1
    }
    fn contract_dim(&self) -> usize {
        1
    }
    fn noise(&self) -> Vec<NoiseKind> {
        Vec::new()
    }
    fn principal<S: Scalar>(&self, a: &[S], t: &[S], _z: &[f64]) -> S {
        a[0] * t[0]
    }
    fn agent<S: Scalar>(&self, a: &[S], t: &[S], _z: &[f64]) -> S {
        -(a[0] - t[0]).square() * 0.5
    }
}

/// Exact hypergradient on the toy, damping bias, and a finite-difference
/// total derivative on analytic HM.
pub fn hypergradient_oracle() -> CriterionReport {
    let mut r = CriterionReport::new("P3", "hypergradient oracle");
    let draws = Draws::analytic();
    let mut exact = 0.0f64;
    let mut damped = 0.0f64;
    for t in [-2.0, -0.7, 0.3, 1.0, 2.0] {
        let h0 = hypergrad_with(&QuadraticToy, &[t], &[t], &draws, 0.0, 20, 1e-14, None);
        let h4 = hypergrad_with(&QuadraticToy, &[t], &[t], &draws, 1e-4, 20, 1e-14, None);
        match (h0, h4) {
            (Ok(h0), Ok(h4)) => {
                exact = exact.max((h0.grad[0] - 2.0 * t).abs());
                damped = damped.max((h4.grad[0] - 2.0 * t).abs());
            }
            (Err(e), _) | (_, Err(e)) => return r.fail(e),
        }
    }
    r.push(Check::at_most("toy |h - 2t| at lambda 0", exact, 1e-10));
    r.push(Check::at_most("toy |h - 2t| at lambda 1e-4", damped, 2e-4));

    let env = match EnvSpec::new(EnvId::Hm).build() {
        Ok(e) => e,
        Err(e) => return r.fail(e),
    };
    for b in [0.3, 0.6, 1.5] {
        match hm_total_derivative(&env, b) {
            Ok(rel) => r.push(Check::at_most(format!("hm b={b} finite-difference rel. error"), rel, 1e-3)),
            Err(e) => return r.fail(e),
        }
    }
    r
}

/// Relative gap between the hypergradient at `λ = 1e-6` and a central
/// difference of `u1(a*(b), b)` with the inner problem re-solved at `b ± δ`.
fn hm_total_derivative(env: &Environment, b: f64) -> Result<f64> {
    const DELTA: f64 = 1e-4;
    let draws = Draws::analytic();
    let solve = |b: f64| -> Result<(Vec<f64>, f64)> {
        let start = ParamVec::unbounded(vec![0.0], Block::Agent);
        let a = refine_best_response(env, &[b], &draws, &start)?.values;
        let u1 = value(&Principal(env), &a, &[b], &draws)?;
        Ok((a, u1))
    };
    let (a, _) = solve(b)?;
    let (_, up) = solve(b + DELTA)?;
    let (_, down) = solve(b - DELTA)?;
    let fd = (up - down) / (2.0 * DELTA);
    let h = hypergrad_with(env, &a, &[b], &draws, 1e-6, 20, 1e-14, None)?;
    Ok((h.grad[0] - fd).abs() / fd.abs().max(f64::MIN_POSITIVE))
}

/// CG against a dense Cholesky solve on random SPD systems, and monotone
/// A-norm error of the iterates for n = 8.
pub fn cg_correctness() -> CriterionReport {
    let mut r = CriterionReport::new("P4", "CG correctness");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [2usize, 8, 50] {
        let (a, b) = random_spd(&mut rng, n);
        let exact = match a.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => return r.fail(format!("n={n}: matrix not SPD")),
        };
        let op = match DenseOperator::new(n, a.as_slice().to_vec()) {
            Ok(op) => op,
            Err(e) => return r.fail(e),
        };
        let report = match conjugate_gradient(&op, b.as_slice(), 10 * n, 1e-10) {
            Ok(rep) => rep,
            Err(e) => return r.fail(e),
        };
        let diff: Vec<f64> = report.solution.iter().zip(exact.iter()).map(|(x, y)| x - y).collect();
        let rel = norm(&diff) / exact.norm();
        r.push(Check::at_most(format!("n={n} relative error vs Cholesky"), rel, 1e-6));

        if n == 8 {
            match a_norm_increase(&op, &a, &b, &exact) {
                Ok(worst) => r.push(Check::at_most("n=8 largest A-norm error increase", worst, 0.0)),
                Err(e) => return r.fail(e),
            }
        }
    }
    r
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let m = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let a = &m * m.transpose() / n as f64 + DMatrix::identity(n, n) * 0.5;
    let b = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (a, b)
}

/// Largest step-to-step increase of `‖x_k - x*‖_A` over the iterates, found
/// by rerunning CG with budgets `0, 1, …` (the iterates are deterministic).
/// Steps below the round-off floor are not compared.
fn a_norm_increase(op: &DenseOperator, a: &DMatrix<f64>, b: &DVector<f64>, exact: &DVector<f64>) -> Result<f64> {
    let n = b.len();
    let a_norm = |x: &[f64]| {
        let e = DVector::from_column_slice(x) - exact;
        e.dot(&(a * &e)).max(0.0).sqrt()
    };
    let floor = 1e-12 * a_norm(&vec![0.0; n]);
    let mut prev = f64::INFINITY;
    let mut worst = 0.0f64;
    for k in 0..=2 * n {
        let x = if k == 0 {
            vec![0.0; n]
        } else {
            conjugate_gradient(op, b.as_slice(), k, 0.0)?.solution
        };
        let err = a_norm(&x);
        if err < floor {
            break;
        }
        worst = worst.max(err - prev);
        prev = err;
    }
    Ok(worst)
}

/// Relative error with a floor on the denominator, so gradients that are
/// zero up to round-off compare on an absolute scale.
fn rel_err(ad: &[f64], fd: &[f64]) -> f64 {
    const FLOOR: f64 = 1e-6;
    let diff: Vec<f64> = ad.iter().zip(fd).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(fd).max(norm(ad)).max(FLOOR)
}

/// Five-point central difference of a vector-valued map along `dir`.
/// Truncation error is `O(h^4)`, which lets `h` be large enough to keep
/// round-off small on nearly flat utilities.
fn central<F: Fn(&[f64]) -> Result<Vec<f64>>>(f: F, x: &[f64], dir: &[f64], h: f64) -> Result<Vec<f64>> {
    let at = |s: f64| f(&x.iter().zip(dir).map(|(xi, di)| xi + s * h * di).collect::<Vec<_>>());
    let (p2, p1, m1, m2) = (at(2.0)?, at(1.0)?, at(-1.0)?, at(-2.0)?);
    Ok((0..p1.len())
        .map(|i| (8.0 * (p1[i] - m1[i]) - (p2[i] - m2[i])) / (12.0 * h))
        .collect())
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

fn fd_gradient(f: &impl Fn(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    (0..x.len())
        .map(|i| central(|y| Ok(vec![f(y)?]), x, &unit(x.len(), i), h).map(|v| v[0]))
        .collect()
}

fn sample_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo.is_finite() && hi.is_finite() {
        // stay clear of the box faces so differences do not straddle them
        let pad = 0.05 * (hi - lo);
        rng.gen_range(lo + pad..hi - pad)
    } else {
        rng.sample(StandardNormal)
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct DerivativeErrors {
    grad: f64,
    hvp: f64,
    symmetry: f64,
}

fn derivative_errors<P: Bilevel>(env: &P, draws: &Draws, rng: &mut ChaCha8Rng, points: usize) -> Result<DerivativeErrors> {
    const H_GRAD: f64 = 1e-3;
    const H_HVP: f64 = 1e-3;
    let (alo, ahi) = env.action_bounds();
    let (tlo, thi) = env.contract_bounds();
    let mut out = DerivativeErrors::default();
    for _ in 0..points {
        let a: Vec<f64> = alo.iter().zip(&ahi).map(|(&l, &h)| sample_in(rng, l, h)).collect();
        let t: Vec<f64> = tlo.iter().zip(&thi).map(|(&l, &h)| sample_in(rng, l, h)).collect();
        let u: Vec<f64> = (0..a.len()).map(|_| rng.sample(StandardNormal)).collect();
        let w: Vec<f64> = (0..a.len()).map(|_| rng.sample(StandardNormal)).collect();

        fn grads<F: SampleFn>(f: &F, a: &[f64], t: &[f64], draws: &Draws, h: f64) -> Result<f64> {
            let ga = grad_a(f, a, t, draws)?;
            let gt = grad_t(f, a, t, draws)?;
            let fa = fd_gradient(&|x: &[f64]| value(f, x, t, draws), a, h)?;
            let ft = fd_gradient(&|x: &[f64]| value(f, a, x, draws), t, h)?;
            Ok(rel_err(&ga, &fa).max(rel_err(&gt, &ft)))
        }
        out.grad = out.grad.max(grads(&Principal(env), &a, &t, draws, H_GRAD)?);
        out.grad = out.grad.max(grads(&Agent(env), &a, &t, draws, H_GRAD)?);

        let agent = Agent(env);
        let hv = hvp_aa(&agent, &a, &t, draws, &u)?;
        let fd_hv = central(|x| grad_a(&agent, x, &t, draws), &a, &u, H_HVP)?;
        out.hvp = out.hvp.max(rel_err(&hv, &fd_hv));
        let mixed = mixed_hvp_ta(&agent, &a, &t, draws, &u)?;
        let directional = |x: &[f64]| -> Result<f64> { Ok(dot(&grad_a(&agent, &a, x, draws)?, &u)) };
        let fd_mixed = fd_gradient(&directional, &t, H_HVP)?;
        out.hvp = out.hvp.max(rel_err(&mixed, &fd_mixed));

        let hw = hvp_aa(&agent, &a, &t, draws, &w)?;
        let (uhw, whu) = (dot(&u, &hw), dot(&w, &hv));
        out.symmetry = out.symmetry.max((uhw - whu).abs() / uhw.abs().max(whu.abs()).max(1.0));
    }
    Ok(out)
}

/// Gradients and Hessian-vector products against central differences at
/// ten random points per environment, analytic and sampled.
pub fn derivative_suite() -> CriterionReport {
    let mut r = CriterionReport::new("P5", "gradient and HVP suite");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cases: Vec<EnvSpec> = EnvId::ALL.into_iter().map(EnvSpec::new).collect();
    cases.extend(linear_ids().map(|id| EnvSpec::new(id).sampled(true)));
    for spec in cases {
        let label = if spec.sampled { format!("{} sampled", spec.id) } else { spec.id.to_string() };
        let result = spec.build().and_then(|env| {
            let dim = if env.is_analytic() { 0 } else { env.noise().len() };
            let draws = env.draws(&make_payload(5, dim, 64, true)?)?;
            derivative_errors(&env, &draws, &mut rng, 10)
        });
        match result {
            Ok(e) => {
                r.push(Check::at_most(format!("{label} gradient rel. error"), e.grad, 1e-5));
                r.push(Check::at_most(format!("{label} HVP rel. error"), e.hvp, 1e-4));
                r.push(Check::at_most(format!("{label} HVP asymmetry"), e.symmetry, 1e-10));
            }
            Err(e) => return r.fail(format!("{label}: {e}")),
        }
    }
    r
}

/// Two runs of the sampled HM config must write identical trace bytes.
/// `first` reuses an earlier run of the same config when available.
pub fn crn_determinism(first: Option<&[u8]>) -> CriterionReport {
    let r = CriterionReport::new("P6", "CRN determinism");
    let cfg = sampled_hm();
    let truth = match cfg.env.build().and_then(|env| closed_form(&env)) {
        Ok(g) => g,
        Err(e) => return r.fail(e),
    };
    let first = match first {
        Some(bytes) => bytes.to_vec(),
        None => match run_in_memory(&cfg, truth.clone()) {
            Ok((_, bytes)) => bytes,
            Err(e) => return r.fail(e),
        },
    };
    let second = match run_in_memory(&cfg, truth) {
        Ok((_, bytes)) => bytes,
        Err(e) => return r.fail(e),
    };
    let differing = first.len().abs_diff(second.len())
        + first.iter().zip(&second).filter(|(x, y)| x != y).count();
    let mut r = r;
    r.push(Check::at_most("hm sampled trace differing bytes", differing as f64, 0.0));
    r
}

const ORACLE_SEED: u64 = 2;

/// HM slope-line recovery and the timed full-size logistic oracle.
pub fn oracle_sanity(options: &SuiteOptions, truths: &mut HashMap<EnvId, GroundTruth>) -> CriterionReport {
    let mut r = CriterionReport::new("P7", "oracle sanity");
    let hm = match EnvSpec::new(EnvId::Hm).build() {
        Ok(e) => e,
        Err(e) => return r.fail(e),
    };
    let line = GridSpec::slope_line((0.0, 2.0), 401, (0.0, 2.0), 4001);
    let b_star = match closed_form(&hm) {
        Ok(g) => g.t_star[0],
        Err(e) => return r.fail(e),
    };
    match grid_search_with(&hm, &line, ORACLE_SEED, options.oracle) {
        Ok(g) => r.push(Check::at_most("hm slope line |b - b*|", (g.t_star[0] - b_star).abs(), 2.5e-3)),
        Err(e) => return r.fail(e),
    }

    let logistic = match EnvSpec::new(EnvId::Logistic).build() {
        Ok(e) => e,
        Err(e) => return r.fail(e),
    };
    let grid = match GridSpec::for_env(&logistic) {
        Ok(g) => g,
        Err(e) => return r.fail(e),
    };
    let start = Instant::now();
    match grid_search_with(&logistic, &grid, ORACLE_SEED, options.oracle) {
        Ok(g) => {
            let secs = start.elapsed().as_secs_f64();
            r.push(Check::at_most("logistic 100x100x200x8192 seconds", secs, 600.0));
            let inside = g.a_star[0].is_finite()
                && g.a_star[0] >= grid.action_box.0
                && g.a_star[0] <= grid.action_box.1;
            r.push(Check::at_most("logistic a* outside the action box", f64::from(u8::from(!inside)), 0.0));
            if let Some(path) = &options.cache {
                let key = crate::oracle::CacheKey::new(&logistic, &grid, ORACLE_SEED);
                if let Err(e) = OracleCache::new(path.clone()).store(&key, &g) {
                    return r.fail(e);
                }
            }
            truths.insert(EnvId::Logistic, g);
        }
        Err(e) => return r.fail(e),
    }
    r
}

fn nonlinear_truth(
    env: &Environment,
    options: &SuiteOptions,
    truths: &mut HashMap<EnvId, GroundTruth>,
) -> Result<GroundTruth> {
    if let Some(g) = truths.get(&env.id()) {
        return Ok(g.clone());
    }
    let grid = GridSpec::for_env(env)?;
    let g = match &options.cache {
        Some(path) => OracleCache::new(path.clone()).get_or_compute(env, &grid, ORACLE_SEED, options.oracle)?,
        None => grid_search_with(env, &grid, ORACLE_SEED, options.oracle)?,
    };
    truths.insert(env.id(), g.clone());
    Ok(g)
}

/// Desk-profile final held-out `u1` may fall short of the oracle value by at
/// most 2% of its magnitude. The oracle's `(a*, t*)` is re-evaluated on the
/// same held-out batch as the solver. Contract errors are not checked.
pub fn utility_consistency(
    options: &SuiteOptions,
    truths: &mut HashMap<EnvId, GroundTruth>,
    feasibility: &mut Vec<Feasibility>,
) -> CriterionReport {
    let mut r = CriterionReport::new("P8", "utility consistency, nonlinear");
    for id in nonlinear_ids().filter(|&id| id != EnvId::CrraLogistic) {
        let cfg = BenchConfig::new(EnvSpec::new(id));
        let result = cfg.env.build().and_then(|env| {
            let truth = nonlinear_truth(&env, options, truths)?;
            let evaluator = Evaluator::from_config(&env, &cfg.solver, Some(truth.clone()))?;
            let u1_oracle = evaluator.u1(&truth.a_star, &truth.t_star)?;
            // how much of u1_oracle survives an exact best response at t*
            let start = ParamVec::new(truth.a_star.clone(), env.action_bounds().0, env.action_bounds().1, Block::Agent)?;
            let a_exact = refine_best_response(&env, &truth.t_star, evaluator.draws(), &start)?;
            let u1_exact = evaluator.u1(&a_exact.values, &truth.t_star)?;
            let (outcome, _) = run_in_memory(&cfg, truth.clone())?;
            Ok((truth, u1_oracle, a_exact.values[0], u1_exact, outcome))
        });
        match result {
            Ok((truth, u1_oracle, a_exact, u1_exact, outcome)) => {
                let u1 = outcome.summary.u1;
                let shortfall = (u1_oracle - u1) / (0.02 * (u1_oracle.abs() + crate::metrics::EPS));
                r.push(Check::at_most(format!("{id} (u1_oracle - u1) / 0.02|u1_oracle|"), shortfall, 1.0));
                r.notes.push(format!(
                    "{id}: u1 {u1:.6}, u1_oracle {u1_oracle:.6} at a* {:.4}; exact best response at t* gives a {a_exact:.4}, u1 {u1_exact:.6}",
                    truth.a_star[0]
                ));
                feasibility.push(Feasibility::of(format!("P8 {id}"), &outcome));
            }
            Err(e) => return r.fail(format!("{id}: {e}")),
        }
    }
    r
}

/// No run left its box, and the hypergradient vanishes at every closed-form
/// optimum.
pub fn feasibility_and_fixed_points(feasibility: &[Feasibility], lambda: f64) -> CriterionReport {
    let mut r = CriterionReport::new("P9", "feasibility and fixed points");
    for f in feasibility {
        let violations = f.infeasible_steps + u64::from(!f.final_feasible);
        r.push(Check::at_most(format!("{} bound violations", f.label), violations as f64, 0.0));
    }
    for id in linear_ids() {
        let result = EnvSpec::new(id).build().and_then(|env| {
            let g = closed_form(&env)?;
            hypergrad_with(&env, &g.a_star, &g.t_star, &Draws::analytic(), lambda, 50, 1e-14, None)
        });
        match result {
            Ok(h) => r.push(Check::at_most(format!("{id} |h| at the optimum"), h.norm, 1e-3)),
            Err(e) => return r.fail(format!("{id}: {e}")),
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_directions_fail_the_sobol_check() {
        assert!(sobol_reference(&DirectionTable::joe_kuo()).passed());
        let mut entries: Vec<(u32, u32, Vec<u32>)> =
            (0..15).map(|_| (1, 0, vec![1])).collect();
        entries[3] = (2, 1, vec![1, 1]);
        let bad = DirectionTable::from_entries(entries).unwrap();
        assert!(!sobol_reference(&bad).passed());
    }

    #[test]
    fn heavy_damping_fails_the_fixed_point_check() {
        assert!(feasibility_and_fixed_points(&[], 1e-6).passed());
        assert!(!feasibility_and_fixed_points(&[], 10.0).passed());
    }

    #[test]
    fn infeasible_runs_are_reported() {
        let bad = Feasibility { label: "x".into(), infeasible_steps: 3, final_feasible: true };
        assert!(!feasibility_and_fixed_points(&[bad], 1e-6).passed());
    }

    #[test]
    fn hypergradient_and_cg_criteria_pass() {
        let p3 = hypergradient_oracle();
        assert!(p3.passed(), "{p3}");
        let p4 = cg_correctness();
        assert!(p4.passed(), "{p4}");
    }

    #[test]
    fn empty_report_does_not_pass() {
        assert!(!CriterionReport::new("X", "nothing").passed());
    }
}
