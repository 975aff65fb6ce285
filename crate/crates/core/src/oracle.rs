//! Nested grid-search reference solutions.
//!
//! For every contract on a rectangular grid the agent's best response is
//! taken from a 1-D action grid, then the principal's utility is evaluated
//! there. One antithetic payload is shared by all grid points. Ties go to
//! the smaller action and to the lexicographically first contract.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;

use crate::autodiff::value;
use crate::environments::{participation_transfer_on, Environment, Signal};
use crate::error::{Error, Result};
use crate::problem::{Agent, Bilevel, GroundTruth, Principal, TruthSource};
use crate::qmc::{make_payload, Draws};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// `[low, high]` per contract coordinate.
    pub contract_box: Vec<(f64, f64)>,
    /// Points per contract axis.
    pub contract_resolution: usize,
    pub action_box: (f64, f64),
    pub action_resolution: usize,
    pub eval_batch_size: usize,
}

/// `k`-th of `n` evenly spaced points on `[lo, hi]`. Written so that the
/// points of an `n`-grid reappear bitwise in the `2n - 1`-grid.
pub fn axis_point(lo: f64, hi: f64, n: usize, k: usize) -> f64 {
    if k + 1 == n {
        hi
    } else {
        lo + (hi - lo) * (k as f64 / (n - 1) as f64)
    }
}

impl GridSpec {
    /// The contract and action boxes attached to a nonlinear environment,
    /// with a 100×100 contract grid, 200 actions and 8192 samples.
    pub fn for_env(env: &Environment) -> Result<Self> {
        if env.signal().is_none() {
            return Err(Error::Unsupported(format!(
                "`{}` has no default search box; use GridSpec::slope_line",
                env.id()
            )));
        }
        let (lo, hi) = env.contract_bounds();
        let (alo, ahi) = env.action_bounds();
        Ok(Self {
            contract_box: lo.into_iter().zip(hi).collect(),
            contract_resolution: 100,
            action_box: (alo[0], ahi[0]),
            action_resolution: 200,
            eval_batch_size: 8192,
        })
    }

    /// A 1-D slope grid for single-slope linear environments.
    pub fn slope_line(slope: (f64, f64), points: usize, action: (f64, f64), actions: usize) -> Self {
        Self {
            contract_box: vec![slope],
            contract_resolution: points,
            action_box: action,
            action_resolution: actions,
            eval_batch_size: 8192,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let boxes = self.contract_box.iter().chain(std::iter::once(&self.action_box));
        for &(lo, hi) in boxes {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidConfig(format!("grid box [{lo}, {hi}] is empty")));
            }
        }
        if self.contract_resolution < 2 || self.action_resolution < 2 {
            return Err(Error::InvalidConfig("grid resolutions must be at least 2".into()));
        }
        if self.eval_batch_size == 0 {
            return Err(Error::InvalidConfig("oracle batch must be non-empty".into()));
        }
        Ok(())
    }

    pub fn contract_points(&self) -> usize {
        self.contract_resolution.pow(self.contract_box.len() as u32)
    }

    /// The contract with lexicographic index `idx` (first axis slowest).
    pub fn contract(&self, mut idx: usize) -> Vec<f64> {
        let n = self.contract_resolution;
        let mut t = vec![0.0; self.contract_box.len()];
        for (d, &(lo, hi)) in self.contract_box.iter().enumerate().rev() {
            t[d] = axis_point(lo, hi, n, idx % n);
            idx /= n;
        }
        t
    }

    pub fn actions(&self) -> Vec<f64> {
        let (lo, hi) = self.action_box;
        (0..self.action_resolution).map(|k| axis_point(lo, hi, self.action_resolution, k)).collect()
    }

    /// Stable text key for caching.
    pub fn key(&self) -> String {
        let boxes: Vec<String> =
            self.contract_box.iter().map(|(lo, hi)| format!("{lo}:{hi}")).collect();
        format!(
            "t={}x{};a={}:{}x{};n={}",
            boxes.join(","),
            self.contract_resolution,
            self.action_box.0,
            self.action_box.1,
            self.action_resolution,
            self.eval_batch_size
        )
    }
}

/// Grid maximizer of the agent's utility. Returns `(a, u2)`.
pub fn best_response_on_grid<P: Bilevel>(
    problem: &P,
    t: &[f64],
    grid: &GridSpec,
    draws: &Draws,
) -> Result<(f64, f64)> {
    if problem.action_dim() != 1 {
        return Err(Error::Unsupported("grid best response needs a scalar action".into()));
    }
    let agent = Agent(problem);
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for a in grid.actions() {
        let u = value(&agent, &[a], t, draws)?;
        if u > best.1 {
            best = (a, u);
        }
    }
    Ok(best)
}

/// One evaluated contract of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub t: Vec<f64>,
    pub a: f64,
    pub u1: f64,
    pub u2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleOptions {
    /// Worker threads; results do not depend on this.
    pub threads: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { threads: thread::available_parallelism().map_or(1, |n| n.get()) }
    }
}

/// The oracle's shared draws for `env`.
pub fn oracle_draws(env: &Environment, grid: &GridSpec, seed: u64) -> Result<Draws> {
    let dim = if env.is_analytic() { 0 } else { env.noise().len() };
    let n = grid.eval_batch_size + grid.eval_batch_size % 2;
    env.draws(&make_payload(seed, dim, n, true)?)
}

/// Per-action tables for signal environments: outcomes, sigmoid shapes and
/// effort costs are independent of the contract, so they are computed once.
struct SignalTables<'a> {
    sig: &'a Signal,
    actions: Vec<f64>,
    outcome: Vec<Vec<f64>>,
    shape: Vec<Vec<f64>>,
    cost: Vec<f64>,
}

impl<'a> SignalTables<'a> {
    fn new(sig: &'a Signal, actions: Vec<f64>, draws: &Draws) -> Self {
        let mut outcome = Vec::with_capacity(actions.len());
        let mut shape = Vec::with_capacity(actions.len());
        for &a in &actions {
            let xs: Vec<f64> = draws.iter().map(|z| sig.outcome(a, z[0])).collect();
            shape.push(xs.iter().map(|&x| sig.shape(x)).collect());
            outcome.push(xs);
        }
        let cost = actions.iter().map(|&a| sig.cost(a)).collect();
        Self { sig, actions, outcome, shape, cost }
    }

    fn evaluate(&self, index: usize, t: Vec<f64>) -> GridPoint {
        let (lambda, mu) = (t[0], t[1]);
        let w_min = self.sig.w_min;
        let utility = self.sig.utility;
        let n = self.shape[0].len() as f64;
        let mut best = (0, f64::NEG_INFINITY);
        for (j, shape) in self.shape.iter().enumerate() {
            let mut acc = 0.0;
            for &s in shape {
                acc += utility.eval((lambda + mu * s).max(w_min));
            }
            let u2 = acc / n - self.cost[j];
            if u2 > best.1 {
                best = (j, u2);
            }
        }
        let j = best.0;
        let mut acc = 0.0;
        for (&x, &s) in self.outcome[j].iter().zip(&self.shape[j]) {
            acc += x - (lambda + mu * s).max(w_min);
        }
        GridPoint { index, t, a: self.actions[j], u1: acc / n, u2: best.1 }
    }
}

fn better(candidate: &GridPoint, incumbent: &GridPoint) -> bool {
    candidate.u1 > incumbent.u1 || (candidate.u1 == incumbent.u1 && candidate.index < incumbent.index)
}

/// Evaluates every contract in `indices` and hands each point to `visit`.
fn scan(
    env: &Environment,
    grid: &GridSpec,
    draws: &Draws,
    indices: std::ops::Range<usize>,
    visit: &mut dyn FnMut(GridPoint),
) -> Result<()> {
    match env.signal() {
        Some(sig) => {
            let tables = SignalTables::new(sig, grid.actions(), draws);
            for idx in indices {
                visit(tables.evaluate(idx, grid.contract(idx)));
            }
        }
        None => {
            let principal = Principal(env);
            for idx in indices {
                let t = grid.contract(idx);
                let (a, u2) = best_response_on_grid(env, &t, grid, draws)?;
                let u1 = value(&principal, &[a], &t, draws)?;
                visit(GridPoint { index: idx, t, a, u1, u2 });
            }
        }
    }
    Ok(())
}

fn check(env: &Environment, grid: &GridSpec) -> Result<()> {
    grid.validate()?;
    if grid.contract_box.len() != env.contract_dim() {
        return Err(Error::Shape { expected: env.contract_dim(), got: grid.contract_box.len() });
    }
    if env.action_dim() != 1 {
        return Err(Error::Unsupported(format!(
            "`{}` has a vector action; grid search covers scalar actions only",
            env.id()
        )));
    }
    Ok(())
}

/// Every grid point with its best response and utilities, in index order.
/// Meant for small grids.
pub fn grid_evaluations(env: &Environment, grid: &GridSpec, seed: u64) -> Result<Vec<GridPoint>> {
    check(env, grid)?;
    let draws = oracle_draws(env, grid, seed)?;
    let mut out = Vec::with_capacity(grid.contract_points());
    scan(env, grid, &draws, 0..grid.contract_points(), &mut |p| out.push(p))?;
    Ok(out)
}

/// Nested grid search with default options.
pub fn grid_search(env: &Environment, grid: &GridSpec, seed: u64) -> Result<GroundTruth> {
    grid_search_with(env, grid, seed, OracleOptions::default())
}

pub fn grid_search_with(
    env: &Environment,
    grid: &GridSpec,
    seed: u64,
    options: OracleOptions,
) -> Result<GroundTruth> {
    check(env, grid)?;
    let draws = oracle_draws(env, grid, seed)?;
    let total = grid.contract_points();
    let threads = options.threads.clamp(1, total);
    let chunk = total.div_ceil(threads);

    let best_in = |range: std::ops::Range<usize>| -> Result<Option<GridPoint>> {
        let mut best: Option<GridPoint> = None;
        scan(env, grid, &draws, range, &mut |p| {
            if best.as_ref().is_none_or(|b| better(&p, b)) {
                best = Some(p);
            }
        })?;
        Ok(best)
    };

    let partials: Vec<Result<Option<GridPoint>>> = if threads == 1 {
        vec![best_in(0..total)]
    } else {
        thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|k| {
                    let range = k * chunk..((k + 1) * chunk).min(total);
                    let best_in = &best_in;
                    s.spawn(move || best_in(range))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("oracle worker panicked")).collect()
        })
    };

    let mut best: Option<GridPoint> = None;
    for partial in partials {
        if let Some(p) = partial? {
            if best.as_ref().is_none_or(|b| better(&p, b)) {
                best = Some(p);
            }
        }
    }
    let best = best.ok_or_else(|| Error::InvalidConfig("empty contract grid".into()))?;
    Ok(GroundTruth {
        a_star: vec![best.a],
        t_star: best.t,
        u1_star: best.u1,
        u2_star: best.u2,
        source: TruthSource::GridSearch,
    })
}

/// Participation transfer evaluated on the oracle's draws.
pub fn post_hoc_transfer(
    env: &Environment,
    slopes: &[f64],
    u_res: f64,
    grid: &GridSpec,
    seed: u64,
) -> Result<f64> {
    let draws = oracle_draws(env, grid, seed)?;
    participation_transfer_on(env, slopes, u_res, &draws)
}

/// Identifies one oracle result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheKey {
    pub env: String,
    pub params: u64,
    pub grid: String,
    pub seed: u64,
}

impl CacheKey {
    pub fn new(env: &Environment, grid: &GridSpec, seed: u64) -> Self {
        Self {
            env: env.id().to_string(),
            params: env.spec().fingerprint(),
            grid: grid.key(),
            seed,
        }
    }
}

/// Oracle results stored as a tab-separated text file, one line per key.
#[derive(Debug, Clone)]
pub struct OracleCache {
    path: PathBuf,
}

const CACHE_HEADER: &str = "env\tparams\tgrid\tseed\tt_star\ta_star\tu1_star\tu2_star";

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn split(field: &str) -> Option<Vec<f64>> {
    field.split(',').map(|x| x.parse().ok()).collect()
}

impl OracleCache {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn lookup(&self, key: &CacheKey) -> Result<Option<GroundTruth>> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        for (lineno, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Io(format!("{}:{}: malformed cache line", self.path.display(), lineno + 1));
            if f.len() != 8 {
                return Err(bad());
            }
            let params = u64::from_str_radix(f[1], 16).map_err(|_| bad())?;
            let seed: u64 = f[3].parse().map_err(|_| bad())?;
            if f[0] == key.env && params == key.params && f[2] == key.grid && seed == key.seed {
                return Ok(Some(GroundTruth {
                    t_star: split(f[4]).ok_or_else(bad)?,
                    a_star: split(f[5]).ok_or_else(bad)?,
                    u1_star: f[6].parse().map_err(|_| bad())?,
                    u2_star: f[7].parse().map_err(|_| bad())?,
                    source: TruthSource::GridSearch,
                }));
            }
        }
        Ok(None)
    }

    pub fn store(&self, key: &CacheKey, truth: &GroundTruth) -> Result<()> {
        let fresh = !self.path.exists();
        let mut file = fs::OpenOptions::new().create(true).append(true).open(&self.path)?;
        if fresh {
            writeln!(file, "{CACHE_HEADER}")?;
        }
        writeln!(
            file,
            "{}\t{:016x}\t{}\t{}\t{}\t{}\t{}\t{}",
            key.env,
            key.params,
            key.grid,
            key.seed,
            join(&truth.t_star),
            join(&truth.a_star),
            truth.u1_star,
            truth.u2_star
        )?;
        Ok(())
    }

    /// Cached result for `(env, grid, seed)`, computing and storing it on a miss.
    pub fn get_or_compute(
        &self,
        env: &Environment,
        grid: &GridSpec,
        seed: u64,
        options: OracleOptions,
    ) -> Result<GroundTruth> {
        let key = CacheKey::new(env, grid, seed);
        if let Some(hit) = self.lookup(&key)? {
            return Ok(hit);
        }
        let truth = grid_search_with(env, grid, seed, options)?;
        self.store(&key, &truth)?;
        Ok(truth)
    }
}
