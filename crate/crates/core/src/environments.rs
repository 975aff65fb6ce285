//! Benchmark principal–agent environments.
//!
//! Six linear CARA–Normal settings with closed-form optima, and five
//! nonlinear signal settings where a wage schedule
//! `w(x) = max(λ + μ·sigmoid((x - a0)/s), w_min)` is paid on an outcome
//! `X = a + sZ` (or `e^a + e^{a/2} Z` for counts).
//!
//! Linear settings are analytic by default: the per-sample terms are the
//! certainty-equivalent expectations themselves. With `sampled = true` the
//! same utilities are written per draw, so the sample average converges to
//! the analytic value.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{sigmoid, value, Scalar};
use crate::error::{Error, Result};
use crate::problem::{Agent, Bilevel, GroundTruth, TruthSource};
use crate::qmc::{Draws, NoiseFamily, NoiseKind, MAX_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnvId {
    Hm,
    Insurance,
    Imperfect,
    TwoSignals,
    Multitask,
    Relative,
    Logistic,
    SqrtLogistic,
    CrraLogistic,
    LaplaceThreshold,
    Poisson,
}

impl EnvId {
    pub const ALL: [EnvId; 11] = [
        EnvId::Hm,
        EnvId::Insurance,
        EnvId::Imperfect,
        EnvId::TwoSignals,
        EnvId::Multitask,
        EnvId::Relative,
        EnvId::Logistic,
        EnvId::SqrtLogistic,
        EnvId::CrraLogistic,
        EnvId::LaplaceThreshold,
        EnvId::Poisson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvId::Hm => "hm",
            EnvId::Insurance => "insurance",
            EnvId::Imperfect => "imperfect",
            EnvId::TwoSignals => "two_signals",
            EnvId::Multitask => "multitask",
            EnvId::Relative => "relative",
            EnvId::Logistic => "logistic",
            EnvId::SqrtLogistic => "sqrt_logistic",
            EnvId::CrraLogistic => "crra_logistic",
            EnvId::LaplaceThreshold => "laplace_threshold",
            EnvId::Poisson => "poisson",
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(
            self,
            EnvId::Hm
                | EnvId::Insurance
                | EnvId::Imperfect
                | EnvId::TwoSignals
                | EnvId::Multitask
                | EnvId::Relative
        )
    }

    /// Parameter names and default values.
    pub fn defaults(self) -> Vec<(&'static str, f64)> {
        let mut p = match self {
            EnvId::Hm => vec![("r", 1.0), ("c", 1.0), ("sigma", 0.1)],
            EnvId::Insurance => vec![("r", 1.0), ("c", 1.0), ("sigma", 1.0), ("loss", 1.0)],
            EnvId::Imperfect => {
                vec![("r", 1.0), ("c", 1.0), ("sigma", 1.0), ("alpha", 1.0), ("v", 1.0)]
            }
            EnvId::TwoSignals => {
                vec![("r", 1.0), ("c", 1.0), ("sigma1", 1.0), ("sigma2", 1.0), ("v", 1.0)]
            }
            EnvId::Multitask => {
                vec![("k", 3.0), ("r", 1.0), ("c", 1.0), ("sigma", 0.2), ("v", 1.0)]
            }
            EnvId::Relative => vec![
                ("r", 1.0),
                ("c", 1.0),
                ("v", 1.0),
                ("sigma", 0.2),
                ("tau", 0.2),
                ("a_peer", 0.1),
            ],
            EnvId::Logistic => vec![("c", 0.25), ("s", 1.0), ("w_min", 0.25), ("a0", 0.0)],
            EnvId::SqrtLogistic => vec![("c", 0.3), ("s", 1.0), ("w_min", 0.2), ("a0", 0.0)],
            EnvId::CrraLogistic => {
                vec![("c", 0.3), ("s", 1.0), ("w_min", 0.2), ("a0", 0.0), ("gamma", 1.2)]
            }
            EnvId::LaplaceThreshold => vec![
                ("c", 0.3),
                ("s", 1.0),
                ("w_min", 0.2),
                ("a0", 0.0),
                ("rho", 1.25),
                ("theta", 0.0),
            ],
            EnvId::Poisson => {
                vec![("c", 0.3), ("s", 1.0), ("w_min", 0.2), ("a0", 0.0), ("rho", 1.0)]
            }
        };
        if self.is_linear() {
            p.push(("transfer", 0.0));
        }
        p.push(("u_res", 0.0));
        p
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        EnvId::ALL.into_iter().find(|id| id.name() == s).ok_or_else(|| {
            let known: Vec<_> = EnvId::ALL.iter().map(|id| id.name()).collect();
            Error::ConfigKey {
                key: "env.id".into(),
                reason: format!("unknown environment `{s}` (known: {})", known.join(", ")),
            }
        })
    }
}

/// An environment id with its named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub id: EnvId,
    pub sampled: bool,
    params: Vec<(String, f64)>,
}

fn task_key(name: &str) -> Option<(&str, usize)> {
    let (base, idx) = name.rsplit_once('_')?;
    if !matches!(base, "c" | "sigma" | "v") {
        return None;
    }
    let i: usize = idx.parse().ok()?;
    (i >= 1).then_some((base, i))
}

impl EnvSpec {
    pub fn new(id: EnvId) -> Self {
        let params = id.defaults().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        Self { id, sampled: false, params }
    }

    pub fn sampled(mut self, sampled: bool) -> Self {
        self.sampled = sampled;
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|&(_, v)| v)
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, f64)> {
        self.params.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Overrides one parameter. Multitask also accepts per-task keys
    /// `c_<i>`, `sigma_<i>`, `v_<i>` (1-based), which take precedence over
    /// the shared value.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if let Some(slot) = self.params.iter_mut().find(|(k, _)| k == name) {
            slot.1 = value;
            return Ok(());
        }
        if self.id == EnvId::Multitask && task_key(name).is_some() {
            self.params.push((name.to_string(), value));
            return Ok(());
        }
        Err(Error::ConfigKey {
            key: format!("env.{name}"),
            reason: format!("`{}` has no parameter `{name}`", self.id),
        })
    }

    pub fn with(mut self, name: &str, value: f64) -> Result<Self> {
        self.set(name, value)?;
        Ok(self)
    }

    /// FNV-1a hash of the id, sampling flag and parameters (sorted by name).
    pub fn fingerprint(&self) -> u64 {
        let mut sorted: Vec<_> = self.params.iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        let mut text = format!("{};sampled={}", self.id, self.sampled);
        for (k, v) in sorted {
            text.push_str(&format!(";{k}={:016x}", v.to_bits()));
        }
        fnv1a(text.as_bytes())
    }

    pub fn build(&self) -> Result<Environment> {
        Environment::new(self.clone())
    }

    fn param(&self, name: &str) -> f64 {
        self.get(name).expect("default parameter present")
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
enum Linear {
    Hm { r: f64, c: f64, sigma: f64 },
    Insurance { r: f64, c: f64, sigma: f64, loss: f64 },
    Imperfect { r: f64, c: f64, sigma: f64, alpha: f64, v: f64 },
    TwoSignals { r: f64, c: f64, sigma1: f64, sigma2: f64, v: f64 },
    Multitask { r: f64, c: Vec<f64>, sigma: Vec<f64>, v: Vec<f64> },
    Relative { r: f64, c: f64, v: f64, sigma: f64, tau: f64, a_peer: f64 },
}

/// How the agent values a wage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WageUtility {
    Log,
    Sqrt,
    Crra { gamma: f64 },
    Threshold { rho: f64, theta: f64 },
    CaraExp { rho: f64 },
}

impl WageUtility {
    pub fn eval<S: Scalar>(self, w: S) -> S {
        match self {
            WageUtility::Log => w.ln(),
            WageUtility::Sqrt => w.sqrt(),
            WageUtility::Crra { gamma } => w.powf(1.0 - gamma) / (1.0 - gamma),
            WageUtility::Threshold { rho, theta } => ((w - theta) * rho).sigmoid(),
            WageUtility::CaraExp { rho } => -(w * (-rho)).exp(),
        }
    }
}

/// Parameters of a nonlinear signal environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub utility: WageUtility,
    pub family: NoiseFamily,
    pub c: f64,
    pub s: f64,
    pub w_min: f64,
    pub a0: f64,
    /// Outcome `e^a + e^{a/2} Z` instead of `a + sZ`.
    pub counts: bool,
    pub contract_lower: [f64; 2],
    pub contract_upper: [f64; 2],
    pub action_box: (f64, f64),
}

impl Signal {
    pub fn outcome<S: Scalar>(&self, a: S, z: f64) -> S {
        if self.counts {
            a.exp() + (a * 0.5).exp() * z
        } else {
            a + self.s * z
        }
    }

    /// The floored wage.
    pub fn wage<S: Scalar>(&self, x: S, t: &[S]) -> S {
        self.raw_wage(x, t).max_const(self.w_min)
    }

    fn raw_wage<S: Scalar>(&self, x: S, t: &[S]) -> S {
        t[0] + t[1] * ((x - self.a0) / self.s).sigmoid()
    }

    /// `sigmoid((x - a0)/s)` for a plain outcome.
    pub fn shape(&self, x: f64) -> f64 {
        sigmoid((x - self.a0) / self.s)
    }

    pub fn cost<S: Scalar>(&self, a: S) -> S {
        a.square() * (0.5 * self.c)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    Linear(Linear),
    Signal(Signal),
}

/// A validated, ready-to-evaluate environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    spec: EnvSpec,
    model: Model,
    transfer: f64,
    u_res: f64,
}

fn positive(spec: &EnvSpec, name: &str) -> Result<f64> {
    let v = spec.param(name);
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::ConfigKey { key: format!("env.{name}"), reason: format!("must be positive, got {v}") })
    }
}

fn finite(spec: &EnvSpec, name: &str) -> Result<f64> {
    let v = spec.param(name);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::ConfigKey { key: format!("env.{name}"), reason: format!("must be finite, got {v}") })
    }
}

impl Environment {
    pub fn new(spec: EnvSpec) -> Result<Self> {
        let u_res = finite(&spec, "u_res")?;
        let transfer = if spec.id.is_linear() { finite(&spec, "transfer")? } else { 0.0 };
        let model = match spec.id {
            EnvId::Hm => Model::Linear(Linear::Hm {
                r: finite(&spec, "r")?,
                c: positive(&spec, "c")?,
                sigma: positive(&spec, "sigma")?,
            }),
            EnvId::Insurance => Model::Linear(Linear::Insurance {
                r: finite(&spec, "r")?,
                c: positive(&spec, "c")?,
                sigma: positive(&spec, "sigma")?,
                loss: finite(&spec, "loss")?,
            }),
            EnvId::Imperfect => Model::Linear(Linear::Imperfect {
                r: finite(&spec, "r")?,
                c: positive(&spec, "c")?,
                sigma: positive(&spec, "sigma")?,
                alpha: finite(&spec, "alpha")?,
                v: finite(&spec, "v")?,
            }),
            EnvId::TwoSignals => Model::Linear(Linear::TwoSignals {
                r: finite(&spec, "r")?,
                c: positive(&spec, "c")?,
                sigma1: positive(&spec, "sigma1")?,
                sigma2: positive(&spec, "sigma2")?,
                v: finite(&spec, "v")?,
            }),
            EnvId::Multitask => {
                let k = spec.param("k");
                if !(k >= 1.0 && k.fract() == 0.0 && k <= MAX_DIM as f64) {
                    return Err(Error::ConfigKey {
                        key: "env.k".into(),
                        reason: format!("must be an integer in 1..={MAX_DIM}, got {k}"),
                    });
                }
                let k = k as usize;
                for (name, _) in spec.params() {
                    if let Some((_, i)) = task_key(name) {
                        if i > k {
                            return Err(Error::ConfigKey {
                                key: format!("env.{name}"),
                                reason: format!("task index exceeds k = {k}"),
                            });
                        }
                    }
                }
                let per_task = |base: &str, must_be_positive: bool| -> Result<Vec<f64>> {
                    (1..=k)
                        .map(|i| {
                            let key = format!("{base}_{i}");
                            let v = spec.get(&key).unwrap_or_else(|| spec.param(base));
                            let ok = v.is_finite() && (!must_be_positive || v > 0.0);
                            if ok {
                                Ok(v)
                            } else {
                                Err(Error::ConfigKey {
                                    key: format!("env.{key}"),
                                    reason: format!("invalid value {v}"),
                                })
                            }
                        })
                        .collect()
                };
                Model::Linear(Linear::Multitask {
                    r: finite(&spec, "r")?,
                    c: per_task("c", true)?,
                    sigma: per_task("sigma", true)?,
                    v: per_task("v", false)?,
                })
            }
            EnvId::Relative => Model::Linear(Linear::Relative {
                r: finite(&spec, "r")?,
                c: positive(&spec, "c")?,
                v: finite(&spec, "v")?,
                sigma: positive(&spec, "sigma")?,
                tau: positive(&spec, "tau")?,
                a_peer: finite(&spec, "a_peer")?,
            }),
            id => {
                let c = positive(&spec, "c")?;
                let s = positive(&spec, "s")?;
                let w_min = positive(&spec, "w_min")?;
                let a0 = finite(&spec, "a0")?;
                let (utility, family) = match id {
                    EnvId::Logistic => (WageUtility::Log, NoiseFamily::Logistic),
                    EnvId::SqrtLogistic => (WageUtility::Sqrt, NoiseFamily::Logistic),
                    EnvId::CrraLogistic => {
                        let gamma = positive(&spec, "gamma")?;
                        if gamma == 1.0 {
                            (WageUtility::Log, NoiseFamily::Logistic)
                        } else {
                            (WageUtility::Crra { gamma }, NoiseFamily::Logistic)
                        }
                    }
                    EnvId::LaplaceThreshold => (
                        WageUtility::Threshold {
                            rho: positive(&spec, "rho")?,
                            theta: finite(&spec, "theta")?,
                        },
                        NoiseFamily::Laplace,
                    ),
                    EnvId::Poisson => {
                        (WageUtility::CaraExp { rho: positive(&spec, "rho")? }, NoiseFamily::Normal)
                    }
                    _ => unreachable!("linear ids handled above"),
                };
                let (contract_lower, contract_upper) = if id == EnvId::CrraLogistic {
                    ([w_min, 0.2], [3.0, 3.0])
                } else {
                    ([w_min, 0.0], [w_min + 8.0, 8.0])
                };
                if contract_lower[0] > contract_upper[0] {
                    return Err(Error::ConfigKey {
                        key: "env.w_min".into(),
                        reason: format!("wage floor {w_min} lies above the contract box"),
                    });
                }
                let counts = id == EnvId::Poisson;
                let half = if counts { 6.0 } else { 6.0 * s };
                Model::Signal(Signal {
                    utility,
                    family,
                    c,
                    s,
                    w_min,
                    a0,
                    counts,
                    contract_lower,
                    contract_upper,
                    action_box: (a0 - half, a0 + half),
                })
            }
        };
        Ok(Self { spec, model, transfer, u_res })
    }

    pub fn id(&self) -> EnvId {
        self.spec.id
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn is_linear(&self) -> bool {
        self.spec.id.is_linear()
    }

    pub fn signal(&self) -> Option<&Signal> {
        match &self.model {
            Model::Signal(s) => Some(s),
            Model::Linear(_) => None,
        }
    }

    pub fn reservation_utility(&self) -> f64 {
        self.u_res
    }

    /// The same environment with the fixed transfer replaced.
    pub fn with_transfer(&self, transfer: f64) -> Self {
        Self { transfer, ..self.clone() }
    }

    fn sampled_linear(&self) -> bool {
        self.spec.sampled
    }

    /// `(φ1, φ2)` for linear settings. `z` is empty for analytic evaluation.
    fn linear_terms<S: Scalar>(&self, lin: &Linear, a: &[S], t: &[S], z: &[f64]) -> (S, S) {
        let noise = |i: usize| if z.is_empty() { 0.0 } else { z[i] };
        let transfer = self.transfer;
        match *lin {
            Linear::Hm { r, c, sigma } => {
                let b = t[0];
                let risk = b.square() * (0.5 * r * sigma * sigma);
                let cost = a[0].square() * (0.5 * c);
                let y = a[0] + sigma * noise(0);
                (y - risk - cost, b * y + transfer - risk - cost)
            }
            Linear::Insurance { r, c, sigma, loss } => {
                let keep = -t[0] + 1.0;
                let risk = keep.square() * (0.5 * r * sigma * sigma);
                let cost = a[0].square() * (0.5 * c);
                let l = -a[0] + (loss + sigma * noise(0));
                (-l - risk - cost, -(keep * l) - transfer - risk - cost)
            }
            Linear::Imperfect { r, c, sigma, alpha, v } => {
                let b = t[0];
                let risk = b.square() * (0.5 * r * sigma * sigma);
                let cost = a[0].square() * (0.5 * c);
                let signal = a[0] * alpha + sigma * noise(0);
                (a[0] * v - risk - cost, b * signal + transfer - risk - cost)
            }
            Linear::TwoSignals { r, c, sigma1, sigma2, v } => {
                let risk = (t[0].square() * (sigma1 * sigma1) + t[1].square() * (sigma2 * sigma2))
                    * (0.5 * r);
                let cost = a[0].square() * (0.5 * c);
                let y1 = a[0] + sigma1 * noise(0);
                let y2 = a[0] + sigma2 * noise(1);
                (a[0] * v - risk - cost, t[0] * y1 + t[1] * y2 + transfer - risk - cost)
            }
            Linear::Multitask { r, ref c, ref sigma, ref v } => {
                let mut risk = S::constant(0.0);
                let mut cost = S::constant(0.0);
                let mut gain = S::constant(0.0);
                let mut pay = S::constant(transfer);
                for i in 0..c.len() {
                    risk += t[i].square() * (0.5 * r * sigma[i] * sigma[i]);
                    cost += a[i].square() * (0.5 * c[i]);
                    gain += a[i] * v[i];
                    pay += t[i] * (a[i] + sigma[i] * noise(i));
                }
                (gain - risk - cost, pay - risk - cost)
            }
            Linear::Relative { r, c, v, sigma, tau, a_peer } => {
                let (b, d) = (t[0], t[1]);
                let risk = ((b.square() + d.square()) * (sigma * sigma)
                    + (b + d).square() * (tau * tau))
                    * (0.5 * r);
                let cost = a[0].square() * (0.5 * c);
                let common = tau * noise(2);
                let yi = a[0] + (sigma * noise(0) + common);
                let yj = S::constant(a_peer + sigma * noise(1) + common);
                (a[0] * v - risk - cost, b * yi + d * yj + transfer - risk - cost)
            }
        }
    }

    /// Number of draws whose raw wage falls below the floor.
    pub fn floor_hits(&self, a: &[f64], t: &[f64], draws: &Draws) -> Result<usize> {
        let sig = self
            .signal()
            .ok_or_else(|| Error::Unsupported(format!("`{}` has no wage floor", self.id())))?;
        Ok(draws
            .iter()
            .filter(|z| sig.raw_wage(sig.outcome(a[0], z[0]), t) < sig.w_min)
            .count())
    }
}

impl Bilevel for Environment {
    fn action_dim(&self) -> usize {
        match &self.model {
            Model::Linear(Linear::Multitask { c, .. }) => c.len(),
            _ => 1,
        }
    }

    fn contract_dim(&self) -> usize {
        match &self.model {
            Model::Linear(Linear::Multitask { c, .. }) => c.len(),
            Model::Linear(Linear::TwoSignals { .. } | Linear::Relative { .. }) => 2,
            Model::Linear(_) => 1,
            Model::Signal(_) => 2,
        }
    }

    fn noise(&self) -> Vec<NoiseKind> {
        match &self.model {
            Model::Signal(s) => vec![NoiseKind::standard(s.family)],
            Model::Linear(_) if !self.sampled_linear() => Vec::new(),
            Model::Linear(lin) => {
                let dim = match lin {
                    Linear::TwoSignals { .. } => 2,
                    Linear::Multitask { c, .. } => c.len(),
                    Linear::Relative { .. } => 3,
                    _ => 1,
                };
                vec![NoiseKind::standard(NoiseFamily::Normal); dim]
            }
        }
    }

    fn principal<S: Scalar>(&self, a: &[S], t: &[S], z: &[f64]) -> S {
        match &self.model {
            Model::Linear(lin) => self.linear_terms(lin, a, t, z).0,
            Model::Signal(sig) => {
                let x = sig.outcome(a[0], z[0]);
                x - sig.wage(x, t)
            }
        }
    }

    fn agent<S: Scalar>(&self, a: &[S], t: &[S], z: &[f64]) -> S {
        match &self.model {
            Model::Linear(lin) => self.linear_terms(lin, a, t, z).1,
            Model::Signal(sig) => {
                let x = sig.outcome(a[0], z[0]);
                sig.utility.eval(sig.wage(x, t)) - sig.cost(a[0])
            }
        }
    }

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.model {
            Model::Signal(s) => (vec![s.action_box.0], vec![s.action_box.1]),
            Model::Linear(_) => {
                let n = self.action_dim();
                (vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n])
            }
        }
    }

    fn contract_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.model {
            Model::Signal(s) => (s.contract_lower.to_vec(), s.contract_upper.to_vec()),
            Model::Linear(_) => {
                let m = self.contract_dim();
                (vec![f64::NEG_INFINITY; m], vec![f64::INFINITY; m])
            }
        }
    }

    fn best_response_hint(&self, t: &[f64]) -> Option<Vec<f64>> {
        match &self.model {
            Model::Signal(_) => None,
            Model::Linear(lin) => Some(match *lin {
                Linear::Hm { c, .. } | Linear::Relative { c, .. } => vec![t[0] / c],
                Linear::Insurance { c, .. } => vec![(1.0 - t[0]) / c],
                Linear::Imperfect { c, alpha, .. } => vec![alpha * t[0] / c],
                Linear::TwoSignals { c, .. } => vec![(t[0] + t[1]) / c],
                Linear::Multitask { ref c, .. } => t.iter().zip(c).map(|(b, ci)| b / ci).collect(),
            }),
        }
    }
}

/// Closed-form optimum of a linear environment. Utilities at the optimum are
/// the analytic expectations with the configured transfer.
pub fn closed_form(env: &Environment) -> Result<GroundTruth> {
    let Model::Linear(lin) = &env.model else {
        return Err(Error::Unsupported(format!("`{}` has no closed-form optimum", env.id())));
    };
    let t_star = match *lin {
        Linear::Hm { r, c, sigma } => vec![1.0 / (1.0 + r * c * sigma * sigma)],
        Linear::Insurance { r, c, sigma, .. } => {
            let k = r * c * sigma * sigma;
            vec![k / (1.0 + k)]
        }
        Linear::Imperfect { r, c, sigma, alpha, v } => {
            vec![v * alpha / (alpha * alpha + r * c * sigma * sigma)]
        }
        Linear::TwoSignals { r, c, sigma1, sigma2, v } => {
            let (p1, p2) = (sigma1.powi(-2), sigma2.powi(-2));
            let eff = 1.0 / (p1 + p2);
            let beta = v / (1.0 + r * c * eff);
            vec![beta * p1 / (p1 + p2), beta * p2 / (p1 + p2)]
        }
        Linear::Multitask { r, ref c, ref sigma, ref v } => (0..c.len())
            .map(|i| v[i] / (1.0 + r * c[i] * sigma[i] * sigma[i]))
            .collect(),
        Linear::Relative { r, c, v, sigma, tau, .. } => {
            let (s2, t2) = (sigma * sigma, tau * tau);
            let eff = s2 * (s2 + 2.0 * t2) / (s2 + t2);
            let b = v / (1.0 + r * c * eff);
            vec![b, -b * t2 / (s2 + t2)]
        }
    };
    let a_star = env.best_response_hint(&t_star).expect("linear environments have a hint");
    let analytic = Draws::analytic();
    let u1_star = env.principal(&a_star, &t_star, &[]);
    let u2_star = value(&Agent(env), &a_star, &t_star, &analytic)?;
    Ok(GroundTruth { a_star, t_star, u1_star, u2_star, source: TruthSource::ClosedForm })
}

/// Fixed transfer that makes the agent's expected utility at its best
/// response to `slopes` equal the reservation utility.
pub fn participation_transfer(env: &Environment, slopes: &[f64], u_res: f64) -> Result<f64> {
    participation_transfer_on(env, slopes, u_res, &Draws::analytic())
}

/// As [`participation_transfer`], with the agent's utility averaged over
/// `draws` when the environment is sampled.
pub fn participation_transfer_on(
    env: &Environment,
    slopes: &[f64],
    u_res: f64,
    draws: &Draws,
) -> Result<f64> {
    let Model::Linear(lin) = &env.model else {
        return Err(Error::Unsupported(format!(
            "`{}` has no additive transfer; the wage level plays that role",
            env.id()
        )));
    };
    if slopes.len() != env.contract_dim() {
        return Err(Error::Shape { expected: env.contract_dim(), got: slopes.len() });
    }
    let base_env = env.with_transfer(0.0);
    let a = base_env.best_response_hint(slopes).expect("linear environments have a hint");
    let analytic = Draws::analytic();
    let draws = if env.is_analytic() { &analytic } else { draws };
    let base = value(&Agent(&base_env), &a, slopes, draws)?;
    Ok(match lin {
        // the premium is paid by the agent
        Linear::Insurance { .. } => base - u_res,
        _ => u_res - base,
    })
}

/// The floored wage `max(λ + μ·sigmoid((x - a0)/s), w_min)`.
pub fn wage(env: &Environment, x: f64, t: &[f64]) -> Result<f64> {
    let sig = env
        .signal()
        .ok_or_else(|| Error::Unsupported(format!("`{}` pays a linear wage", env.id())))?;
    if t.len() != 2 {
        return Err(Error::Shape { expected: 2, got: t.len() });
    }
    Ok(sig.wage(x, t))
}
