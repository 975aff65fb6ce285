//! Config-driven runs, sweeps and oracle computations with CSV output.
//!
//! A config is a TOML document with the sections `[env]`, `[solver]`,
//! `[run]`, `[oracle]` and, for sweeps, `[sweep]`:
//!
//! ```toml
//! [env]
//! id = "hm"          # required
//! sampled = false    # linear settings only
//! sigma = 0.1        # any parameter of the environment
//!
//! [solver]
//! profile = "desk"   # "desk" or "paper"; explicit keys override it
//! eta_out = 1e-2
//! t_out = 20000
//!
//! [run]
//! init_seed = 0
//! truth = "auto"     # "auto" or "none"
//!
//! [oracle]
//! seed = 2
//! cache = "oracle_cache.tsv"
//!
//! [sweep]
//! param = "r"
//! values = [1e-3, 1e-2, 1e-1, 1, 10, 100]
//! ```
//!
//! Unknown sections and keys are rejected with the dotted key in the error.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::environments::{closed_form, participation_transfer_on, EnvId, EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::metrics::Evaluator;
use crate::oracle::{grid_search_with, oracle_draws, GridSpec, OracleCache, OracleOptions};
use crate::problem::GroundTruth;
use crate::solver::{outer_loop, random_init, RunOutcome, SolverConfig, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthMode {
    /// Closed form for linear settings, cached grid search otherwise.
    Auto,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub init_seed: u64,
    pub truth: TruthMode,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { init_seed: 0, truth: TruthMode::Auto }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSettings {
    pub seed: u64,
    pub contract_resolution: usize,
    pub action_resolution: usize,
    pub eval_batch_size: usize,
    pub threads: Option<usize>,
    /// Cache file; relative paths are resolved against the output directory.
    pub cache: Option<PathBuf>,
    pub contract_box: Option<Vec<(f64, f64)>>,
    pub action_box: Option<(f64, f64)>,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            seed: 2,
            contract_resolution: 100,
            action_resolution: 200,
            eval_batch_size: 8192,
            threads: None,
            cache: Some(PathBuf::from("oracle_cache.tsv")),
            contract_box: None,
            action_box: None,
        }
    }
}

impl OracleSettings {
    pub fn grid(&self, env: &Environment) -> Result<GridSpec> {
        let mut grid = match GridSpec::for_env(env) {
            Ok(g) => g,
            Err(_) => {
                let (Some(contract_box), Some(action_box)) = (&self.contract_box, self.action_box)
                else {
                    return Err(Error::ConfigKey {
                        key: "oracle.contract_box".into(),
                        reason: format!("`{}` needs explicit contract_box and action_box", env.id()),
                    });
                };
                GridSpec {
                    contract_box: contract_box.clone(),
                    contract_resolution: 0,
                    action_box,
                    action_resolution: 0,
                    eval_batch_size: 0,
                }
            }
        };
        if let Some(b) = &self.contract_box {
            grid.contract_box = b.clone();
        }
        if let Some(b) = self.action_box {
            grid.action_box = b;
        }
        grid.contract_resolution = self.contract_resolution;
        grid.action_resolution = self.action_resolution;
        grid.eval_batch_size = self.eval_batch_size;
        grid.validate()?;
        Ok(grid)
    }

    pub fn options(&self) -> OracleOptions {
        match self.threads {
            Some(threads) => OracleOptions { threads },
            None => OracleOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub env: EnvSpec,
    pub profile: Profile,
    pub solver: SolverConfig,
    pub run: RunOptions,
    pub oracle: OracleSettings,
    pub sweep: Option<SweepSpec>,
}

/// Key bookkeeping for one table of the config.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    used: BTreeSet<&'a str>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'static str) -> Result<Self> {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                return Err(Error::ConfigKey { key: name.into(), reason: "must be a table".into() })
            }
        };
        Ok(Self { name, table, used: BTreeSet::new() })
    }

    fn key(&self, k: &str) -> String {
        format!("{}.{k}", self.name)
    }

    fn err(&self, k: &str, reason: impl Into<String>) -> Error {
        Error::ConfigKey { key: self.key(k), reason: reason.into() }
    }

    fn raw(&mut self, k: &'a str) -> Option<&'a Value> {
        let v = self.table?.get(k)?;
        self.used.insert(k);
        Some(v)
    }

    fn float(&mut self, k: &'a str) -> Result<Option<f64>> {
        match self.raw(k) {
            None => Ok(None),
            Some(v) => number(v).map(Some).ok_or_else(|| self.err(k, "expected a number")),
        }
    }

    fn count(&mut self, k: &'a str) -> Result<Option<u64>> {
        match self.float(k)? {
            None => Ok(None),
            Some(x) if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(63) => Ok(Some(x as u64)),
            Some(x) => Err(self.err(k, format!("expected a non-negative integer, got {x}"))),
        }
    }

    fn boolean(&mut self, k: &'a str) -> Result<Option<bool>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(self.err(k, "expected true or false")),
        }
    }

    fn string(&mut self, k: &'a str) -> Result<Option<&'a str>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.err(k, "expected a string")),
        }
    }

    fn pair(&self, k: &str, v: &Value) -> Result<(f64, f64)> {
        match v {
            Value::Array(xs) if xs.len() == 2 => match (number(&xs[0]), number(&xs[1])) {
                (Some(lo), Some(hi)) => Ok((lo, hi)),
                _ => Err(self.err(k, "expected [low, high]")),
            },
            _ => Err(self.err(k, "expected [low, high]")),
        }
    }

    fn remaining(&self) -> Vec<&'a str> {
        match self.table {
            None => Vec::new(),
            Some(t) => t.keys().map(String::as_str).filter(|k| !self.used.contains(k)).collect(),
        }
    }

    fn finish(self) -> Result<()> {
        match self.remaining().first() {
            Some(k) => Err(self.err(k, "unknown key")),
            None => Ok(()),
        }
    }
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

impl BenchConfig {
    /// Desk profile for `env`, default run and oracle settings.
    pub fn new(env: EnvSpec) -> Self {
        let solver = if env.id.is_linear() {
            SolverConfig::desk_linear()
        } else {
            SolverConfig::desk_nonlinear()
        };
        Self {
            env,
            profile: Profile::Desk,
            solver,
            run: RunOptions::default(),
            oracle: OracleSettings::default(),
            sweep: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let root: Table = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        const SECTIONS: [&str; 5] = ["env", "solver", "run", "oracle", "sweep"];
        if let Some(k) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(Error::ConfigKey { key: k.clone(), reason: "unknown section".into() });
        }

        let mut env_sec = Section::new(&root, "env")?;
        let id: EnvId = env_sec
            .string("id")?
            .ok_or_else(|| env_sec.err("id", "missing environment id"))?
            .parse()?;
        let mut env = EnvSpec::new(id);
        if let Some(sampled) = env_sec.boolean("sampled")? {
            if sampled && !id.is_linear() {
                return Err(env_sec.err("sampled", "only linear environments have an analytic form"));
            }
            env = env.sampled(sampled);
        }
        for k in env_sec.remaining() {
            let v = env_sec.float(k)?.expect("key present");
            env.set(k, v)?;
        }
        env_sec.finish()?;

        let mut s = Section::new(&root, "solver")?;
        let profile = match s.string("profile")? {
            None | Some("desk") => Profile::Desk,
            Some("paper") => Profile::Paper,
            Some(other) => return Err(s.err("profile", format!("unknown profile `{other}`"))),
        };
        let mut solver = match (profile, id.is_linear()) {
            (Profile::Paper, _) => SolverConfig::default(),
            (Profile::Desk, true) => SolverConfig::desk_linear(),
            (Profile::Desk, false) => SolverConfig::desk_nonlinear(),
        };
        macro_rules! set {
            ($field:ident, float) => {
                if let Some(v) = s.float(stringify!($field))? {
                    solver.$field = v;
                }
            };
            ($field:ident, count) => {
                if let Some(v) = s.count(stringify!($field))? {
                    solver.$field = v as _;
                }
            };
        }
        set!(eta_in, float);
        set!(t_in, count);
        set!(eps_in, float);
        set!(eta_out, float);
        set!(t_out, count);
        set!(t_cg, count);
        set!(lambda, float);
        set!(eps_cg, float);
        set!(batch_n, count);
        set!(refresh_r, count);
        set!(train_seed, count);
        set!(eval_seed, count);
        set!(eval_size, count);
        set!(log_every, count);
        if let Some(b) = s.boolean("antithetic")? {
            solver.antithetic = b;
        }
        if let Some(c) = s.float("clip_norm")? {
            solver.clip_norm = Some(c);
        }
        s.finish()?;
        solver.validate()?;

        let mut r = Section::new(&root, "run")?;
        let mut run = RunOptions::default();
        if let Some(seed) = r.count("init_seed")? {
            run.init_seed = seed;
        }
        run.truth = match r.string("truth")? {
            None | Some("auto") => TruthMode::Auto,
            Some("none") => TruthMode::None,
            Some(other) => return Err(r.err("truth", format!("expected \"auto\" or \"none\", got `{other}`"))),
        };
        r.finish()?;

        let mut o = Section::new(&root, "oracle")?;
        let mut oracle = OracleSettings::default();
        if let Some(v) = o.count("seed")? {
            oracle.seed = v;
        }
        if let Some(v) = o.count("contract_resolution")? {
            oracle.contract_resolution = v as usize;
        }
        if let Some(v) = o.count("action_resolution")? {
            oracle.action_resolution = v as usize;
        }
        if let Some(v) = o.count("eval_batch_size")? {
            oracle.eval_batch_size = v as usize;
        }
        if let Some(v) = o.count("threads")? {
            if v == 0 {
                return Err(o.err("threads", "must be at least 1"));
            }
            oracle.threads = Some(v as usize);
        }
        match o.raw("cache") {
            None => {}
            Some(Value::String(p)) if p.is_empty() => oracle.cache = None,
            Some(Value::String(p)) => oracle.cache = Some(PathBuf::from(p)),
            Some(Value::Boolean(false)) => oracle.cache = None,
            Some(_) => return Err(o.err("cache", "expected a path or false")),
        }
        if let Some(v) = o.raw("contract_box") {
            let Value::Array(rows) = v else {
                return Err(o.err("contract_box", "expected a list of [low, high] pairs"));
            };
            oracle.contract_box =
                Some(rows.iter().map(|row| o.pair("contract_box", row)).collect::<Result<_>>()?);
        }
        if let Some(v) = o.raw("action_box") {
            oracle.action_box = Some(o.pair("action_box", v)?);
        }
        o.finish()?;

        let mut w = Section::new(&root, "sweep")?;
        let sweep = match w.table {
            None => None,
            Some(_) => {
                let param = w.string("param")?.ok_or_else(|| w.err("param", "missing"))?.to_string();
                if env.get(&param).is_none() && env.clone().with(&param, 0.0).is_err() {
                    return Err(w.err("param", format!("`{id}` has no parameter `{param}`")));
                }
                let values = match w.raw("values") {
                    Some(Value::Array(xs)) => xs
                        .iter()
                        .map(|x| number(x).ok_or_else(|| w.err("values", "expected numbers")))
                        .collect::<Result<Vec<_>>>()?,
                    Some(_) => return Err(w.err("values", "expected a list of numbers")),
                    None => return Err(w.err("values", "missing")),
                };
                Some(SweepSpec { param, values })
            }
        };
        w.finish()?;

        Ok(Self { env, profile, solver, run, oracle, sweep })
    }

    /// Applies the `--seed` flag: the initialization and the training payload
    /// follow it, the held-out batch does not.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.init_seed = seed;
        self.solver.train_seed = seed;
        self
    }
}

pub const TRACE_HEADER: &str =
    "step,u1,u2,err_a,err_t,gap_u1,gap_u2,hgrad_norm,inner_iters,cg_iters,cg_converged";

/// 17 significant digits; round-trips every `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

pub fn format_row(row: &TraceRow) -> String {
    let m = row.metrics;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        row.step,
        format_float(row.u1),
        format_float(row.u2),
        opt_float(m.map(|m| m.err_a)),
        opt_float(m.map(|m| m.err_t)),
        opt_float(m.map(|m| m.gap_u1)),
        opt_float(m.map(|m| m.gap_u2)),
        opt_float(row.hgrad_norm),
        row.inner_iters,
        row.cg_iters,
        row.cg_converged.map(|b| b.to_string()).unwrap_or_default(),
    )
}

/// Inverse of [`format_row`].
pub fn parse_row(line: &str) -> Result<TraceRow> {
    let f: Vec<&str> = line.split(',').collect();
    let bad = |what: &str| Error::InvalidConfig(format!("malformed trace row ({what}): {line}"));
    if f.len() != 11 {
        return Err(bad("field count"));
    }
    let float = |s: &str| s.parse::<f64>().map_err(|_| bad("number"));
    let opt = |s: &str| if s.is_empty() { Ok(None) } else { float(s).map(Some) };
    let int = |s: &str| s.parse::<u64>().map_err(|_| bad("integer"));
    let metrics = match (opt(f[3])?, opt(f[4])?, opt(f[5])?, opt(f[6])?) {
        (Some(err_a), Some(err_t), Some(gap_u1), Some(gap_u2)) => {
            Some(crate::metrics::Metrics { err_a, err_t, gap_u1, gap_u2 })
        }
        (None, None, None, None) => None,
        _ => return Err(bad("partial metrics")),
    };
    Ok(TraceRow {
        step: int(f[0])?,
        u1: float(f[1])?,
        u2: float(f[2])?,
        metrics,
        hgrad_norm: opt(f[7])?,
        inner_iters: int(f[8])? as usize,
        cg_iters: int(f[9])? as usize,
        cg_converged: match f[10] {
            "" => None,
            "true" => Some(true),
            "false" => Some(false),
            _ => return Err(bad("flag")),
        },
    })
}

/// Reference solution for a run, per the config's truth mode.
pub fn truth_for(cfg: &BenchConfig, env: &Environment, out_dir: &Path) -> Result<Option<GroundTruth>> {
    match cfg.run.truth {
        TruthMode::None => Ok(None),
        TruthMode::Auto if env.is_linear() => closed_form(env).map(Some),
        TruthMode::Auto => compute_oracle(cfg, env, out_dir).map(Some),
    }
}

fn compute_oracle(cfg: &BenchConfig, env: &Environment, out_dir: &Path) -> Result<GroundTruth> {
    let grid = cfg.oracle.grid(env)?;
    let options = cfg.oracle.options();
    match &cfg.oracle.cache {
        Some(path) => {
            fs::create_dir_all(out_dir)?;
            OracleCache::new(out_dir.join(path)).get_or_compute(env, &grid, cfg.oracle.seed, options)
        }
        None => grid_search_with(env, &grid, cfg.oracle.seed, options),
    }
}

/// A finished run together with its reference solution.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub outcome: RunOutcome,
    pub truth: Option<GroundTruth>,
}

/// Runs one solve, streaming trace rows to `trace` (header first) and
/// writing the header plus the summary row to `summary`.
pub fn run_with_writers(
    cfg: &BenchConfig,
    truth: Option<GroundTruth>,
    trace: &mut dyn Write,
    summary: &mut dyn Write,
) -> Result<RunReport> {
    let env = cfg.env.build()?;
    let evaluator = Evaluator::from_config(&env, &cfg.solver, truth.clone())?;
    let (a0, t0) = random_init(&env, cfg.run.init_seed)?;
    writeln!(trace, "{TRACE_HEADER}")?;
    let mut sink = |row: &TraceRow| -> Result<()> {
        writeln!(trace, "{}", format_row(row))?;
        Ok(())
    };
    let outcome = outer_loop(&env, t0, a0, &cfg.solver, &evaluator, &mut sink);
    trace.flush()?;
    let outcome = outcome?;
    writeln!(summary, "{TRACE_HEADER}")?;
    writeln!(summary, "{}", format_row(&outcome.summary))?;
    summary.flush()?;
    Ok(RunReport { outcome, truth })
}

/// `run`: writes `trace.csv` and `summary.csv` into `out_dir`.
pub fn run(cfg: &BenchConfig, out_dir: &Path) -> Result<RunReport> {
    if cfg.sweep.is_some() {
        return Err(Error::ConfigKey {
            key: "sweep".into(),
            reason: "a [sweep] section belongs to the sweep command".into(),
        });
    }
    fs::create_dir_all(out_dir)?;
    let env = cfg.env.build()?;
    let truth = truth_for(cfg, &env, out_dir)?;
    let mut trace = std::io::BufWriter::new(fs::File::create(out_dir.join("trace.csv"))?);
    let mut summary = fs::File::create(out_dir.join("summary.csv"))?;
    run_with_writers(cfg, truth, &mut trace, &mut summary)
}

pub const SWEEP_HEADER: &str = "param,value,step,u1,u2,err_a,err_t,gap_u1,gap_u2,hgrad_norm,\
inner_iters,cg_iters,cg_converged,t_final,a_final,t_star,a_star,u1_star";

fn vector_cell(xs: &[f64]) -> String {
    xs.iter().map(|&x| format_float(x)).collect::<Vec<_>>().join(";")
}

/// `sweep`: one run per swept value, each with its own trace file, and a
/// `sweep.csv` with the final row of every run in grid order.
pub fn sweep(cfg: &BenchConfig, out_dir: &Path) -> Result<Vec<RunReport>> {
    let spec = cfg.sweep.as_ref().ok_or_else(|| Error::ConfigKey {
        key: "sweep".into(),
        reason: "missing [sweep] section".into(),
    })?;
    fs::create_dir_all(out_dir)?;
    let mut table = String::new();
    writeln!(table, "{SWEEP_HEADER}").expect("string write");
    let mut reports = Vec::with_capacity(spec.values.len());
    for (i, &v) in spec.values.iter().enumerate() {
        let mut one = cfg.clone();
        one.sweep = None;
        one.env.set(&spec.param, v)?;
        let env = one.env.build()?;
        let truth = truth_for(&one, &env, out_dir)?;
        let trace_path = out_dir.join(format!("trace_{}_{i}.csv", spec.param));
        let mut trace = std::io::BufWriter::new(fs::File::create(trace_path)?);
        let report = run_with_writers(&one, truth, &mut trace, &mut std::io::sink())?;
        let o = &report.outcome;
        let (t_star, a_star, u1_star) = match &report.truth {
            Some(g) => (vector_cell(&g.t_star), vector_cell(&g.a_star), format_float(g.u1_star)),
            None => Default::default(),
        };
        writeln!(
            table,
            "{},{},{},{},{},{},{},{u1_star}",
            spec.param,
            format_float(v),
            format_row(&o.summary),
            vector_cell(&o.t.values),
            vector_cell(&o.a.values),
            t_star,
            a_star,
        )
        .expect("string write");
        reports.push(report);
    }
    fs::write(out_dir.join("sweep.csv"), table)?;
    Ok(reports)
}

pub const ORACLE_HEADER: &str = "env,seed,t_star,a_star,u1_star,u2_star,transfer";

/// `oracle`: grid-search reference for the configured environment, written
/// to `oracle.csv`. Linear settings also report the participation transfer
/// at the grid optimum.
pub fn oracle(cfg: &BenchConfig, out_dir: &Path) -> Result<GroundTruth> {
    fs::create_dir_all(out_dir)?;
    let env = cfg.env.build()?;
    let truth = compute_oracle(cfg, &env, out_dir)?;
    let transfer = if env.is_linear() {
        let grid = cfg.oracle.grid(&env)?;
        let draws = oracle_draws(&env, &grid, cfg.oracle.seed)?;
        let u_res = env.reservation_utility();
        format_float(participation_transfer_on(&env, &truth.t_star, u_res, &draws)?)
    } else {
        String::new()
    };
    let text = format!(
        "{ORACLE_HEADER}\n{},{},{},{},{},{},{}\n",
        env.id(),
        cfg.oracle.seed,
        vector_cell(&truth.t_star),
        vector_cell(&truth.a_star),
        format_float(truth.u1_star),
        format_float(truth.u2_star),
        transfer
    );
    fs::write(out_dir.join("oracle.csv"), text)?;
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_env_id_is_named() {
        let err = BenchConfig::parse("[env]\nsigma = 0.1\n").unwrap_err();
        assert!(matches!(err, Error::ConfigKey { ref key, .. } if key == "env.id"), "{err}");
        let err = BenchConfig::parse("").unwrap_err();
        assert!(matches!(err, Error::ConfigKey { ref key, .. } if key == "env.id"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for (text, key) in [
            ("[env]\nid = \"hm\"\nbogus = 1\n", "env.bogus"),
            ("[env]\nid = \"hm\"\n[solver]\nbogus = 1\n", "solver.bogus"),
            ("[env]\nid = \"hm\"\n[run]\nbogus = 1\n", "run.bogus"),
            ("[env]\nid = \"hm\"\n[oracle]\nbogus = 1\n", "oracle.bogus"),
            ("[env]\nid = \"hm\"\n[extra]\n", "extra"),
        ] {
            let err = BenchConfig::parse(text).unwrap_err();
            assert!(matches!(err, Error::ConfigKey { key: ref k, .. } if k == key), "{text}: {err}");
        }
    }

    #[test]
    fn profiles_and_overrides() {
        let c = BenchConfig::parse("[env]\nid = \"hm\"\n").unwrap();
        assert_eq!(c.solver, SolverConfig::desk_linear());
        let c = BenchConfig::parse("[env]\nid = \"poisson\"\n").unwrap();
        assert_eq!(c.solver, SolverConfig::desk_nonlinear());
        let c = BenchConfig::parse("[env]\nid = \"hm\"\n[solver]\nprofile = \"paper\"\nt_out = 2e3\n").unwrap();
        assert_eq!(c.solver.t_out, 2000);
        assert_eq!(c.solver.eta_out, 1e-3);
        let err = BenchConfig::parse("[env]\nid = \"hm\"\n[solver]\nt_out = 2.5\n").unwrap_err();
        assert!(matches!(err, Error::ConfigKey { ref key, .. } if key == "solver.t_out"));
    }

    #[test]
    fn env_parameters_are_applied() {
        let c = BenchConfig::parse("[env]\nid = \"multitask\"\nk = 2\nc_2 = 3\nsampled = true\n").unwrap();
        assert_eq!(c.env.get("k"), Some(2.0));
        assert_eq!(c.env.get("c_2"), Some(3.0));
        assert!(c.env.sampled);
        assert!(BenchConfig::parse("[env]\nid = \"logistic\"\nsampled = true\n").is_err());
    }

    #[test]
    fn sweep_section() {
        let c = BenchConfig::parse(
            "[env]\nid = \"hm\"\n[sweep]\nparam = \"r\"\nvalues = [1e-3, 1e-2, 0.1, 1, 10, 100]\n",
        )
        .unwrap();
        assert_eq!(c.sweep.unwrap().values.len(), 6);
        let err = BenchConfig::parse("[env]\nid = \"hm\"\n[sweep]\nparam = \"gamma\"\nvalues = []\n")
            .unwrap_err();
        assert!(matches!(err, Error::ConfigKey { ref key, .. } if key == "sweep.param"));
    }

    #[test]
    fn seed_flag_moves_init_and_training_payload() {
        let c = BenchConfig::parse("[env]\nid = \"hm\"\n").unwrap().with_seed(7);
        assert_eq!(c.run.init_seed, 7);
        assert_eq!(c.solver.train_seed, 7);
        assert_eq!(c.solver.eval_seed, 1);
    }

    #[test]
    fn float_format_has_seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(-2.0), "-2.0000000000000000e0");
    }
}
