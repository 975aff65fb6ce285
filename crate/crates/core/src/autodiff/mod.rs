//! Forward-mode derivatives of sample-average objectives.
//!
//! An objective is any [`SampleFn`]: a function of the action `a`, the
//! contract `t` and one row `z` of noise draws, generic over [`Scalar`].
//! The drivers here average it over a [`Draws`] batch in index order and
//! return exact first derivatives (one [`Dual`] pass per coordinate) or
//! second-order contractions (one [`HyperDual`] pass per output coordinate).

mod scalar;

pub use scalar::{sigmoid, Dual, HyperDual, Scalar};

use crate::error::{Error, Result};
use crate::qmc::Draws;

/// A per-sample objective `φ(a, t; z)`.
pub trait SampleFn {
    fn eval<S: Scalar>(&self, a: &[S], t: &[S], z: &[f64]) -> S;
}

impl<F: SampleFn + ?Sized> SampleFn for &F {
    fn eval<S: Scalar>(&self, a: &[S], t: &[S], z: &[f64]) -> S {
        (**self).eval(a, t, z)
    }
}

fn mean<S: Scalar, F: SampleFn>(f: &F, a: &[S], t: &[S], draws: &Draws) -> Result<S> {
    let mut acc = S::constant(0.0);
    for (sample, z) in draws.iter().enumerate() {
        let y = f.eval(a, t, z);
        if !y.is_finite() {
            return Err(Error::NonFinite { sample });
        }
        acc += y;
    }
    Ok(acc / draws.len() as f64)
}

fn constants<S: Scalar>(x: &[f64]) -> Vec<S> {
    x.iter().map(|&v| S::constant(v)).collect()
}

/// Sample average of `f` at `(a, t)`.
pub fn value<F: SampleFn>(f: &F, a: &[f64], t: &[f64], draws: &Draws) -> Result<f64> {
    mean(f, a, t, draws)
}

/// Gradient of the sample average with respect to `a`.
pub fn grad_a<F: SampleFn>(f: &F, a: &[f64], t: &[f64], draws: &Draws) -> Result<Vec<f64>> {
    let tc: Vec<Dual> = constants(t);
    let mut ad: Vec<Dual> = constants(a);
    let mut out = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        ad[i].fu = 1.0;
        out.push(mean(f, &ad, &tc, draws)?.fu);
        ad[i].fu = 0.0;
    }
    Ok(out)
}

/// Gradient of the sample average with respect to `t`.
pub fn grad_t<F: SampleFn>(f: &F, a: &[f64], t: &[f64], draws: &Draws) -> Result<Vec<f64>> {
    let ac: Vec<Dual> = constants(a);
    let mut td: Vec<Dual> = constants(t);
    let mut out = Vec::with_capacity(t.len());
    for j in 0..t.len() {
        td[j].fu = 1.0;
        out.push(mean(f, &ac, &td, draws)?.fu);
        td[j].fu = 0.0;
    }
    Ok(out)
}

/// Value and action-gradient in one call; the value comes from the first pass.
pub fn value_and_grad_a<F: SampleFn>(
    f: &F,
    a: &[f64],
    t: &[f64],
    draws: &Draws,
) -> Result<(f64, Vec<f64>)> {
    if a.is_empty() {
        return Ok((value(f, a, t, draws)?, Vec::new()));
    }
    let tc: Vec<Dual> = constants(t);
    let mut ad: Vec<Dual> = constants(a);
    let mut out = Vec::with_capacity(a.len());
    let mut val = 0.0;
    for i in 0..a.len() {
        ad[i].fu = 1.0;
        let m = mean(f, &ad, &tc, draws)?;
        if i == 0 {
            val = m.f;
        }
        out.push(m.fu);
        ad[i].fu = 0.0;
    }
    Ok((val, out))
}

/// `∇²_aa f · v`, one hyper-dual pass per action coordinate.
pub fn hvp_aa<F: SampleFn>(
    f: &F,
    a: &[f64],
    t: &[f64],
    draws: &Draws,
    v: &[f64],
) -> Result<Vec<f64>> {
    check_len(a.len(), v.len())?;
    let tc: Vec<HyperDual> = constants(t);
    let mut ah: Vec<HyperDual> =
        a.iter().zip(v).map(|(&x, &d)| HyperDual::new(x, 0.0, d, 0.0)).collect();
    let mut out = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        ah[i].fu = 1.0;
        out.push(mean(f, &ah, &tc, draws)?.fuv);
        ah[i].fu = 0.0;
    }
    Ok(out)
}

/// `∇_t (∇_a f · v)`, one hyper-dual pass per contract coordinate.
pub fn mixed_hvp_ta<F: SampleFn>(
    f: &F,
    a: &[f64],
    t: &[f64],
    draws: &Draws,
    v: &[f64],
) -> Result<Vec<f64>> {
    check_len(a.len(), v.len())?;
    let ah: Vec<HyperDual> =
        a.iter().zip(v).map(|(&x, &d)| HyperDual::new(x, d, 0.0, 0.0)).collect();
    let mut th: Vec<HyperDual> = constants(t);
    let mut out = Vec::with_capacity(t.len());
    for j in 0..t.len() {
        th[j].fv = 1.0;
        out.push(mean(f, &ah, &th, draws)?.fuv);
        th[j].fv = 0.0;
    }
    Ok(out)
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { expected, got })
    }
}
