//! The bilevel problem interface the solver works against.

use crate::autodiff::{SampleFn, Scalar};
use crate::error::Result;
use crate::qmc::{CrnPayload, Draws, NoiseKind};

/// Principal–agent problem: the principal picks `t` to maximize `u1`, the
/// agent answers with `a` maximizing `u2`. Both utilities are expectations of
/// per-sample terms over the noise described by [`Bilevel::noise`]; an empty
/// noise list means the per-sample terms already are the expectations.
pub trait Bilevel {
    fn action_dim(&self) -> usize;
    fn contract_dim(&self) -> usize;

    /// One entry per stochastic coordinate of a sample.
    fn noise(&self) -> Vec<NoiseKind>;

    fn principal<S: Scalar>(&self, a: &[S], t: &[S], z: &[f64]) -> S;
    fn agent<S: Scalar>(&self, a: &[S], t: &[S], z: &[f64]) -> S;

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.action_dim();
        (vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n])
    }

    fn contract_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.contract_dim();
        (vec![f64::NEG_INFINITY; m], vec![f64::INFINITY; m])
    }

    /// Exact best response to `t`, when one is known in closed form.
    fn best_response_hint(&self, _t: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn is_analytic(&self) -> bool {
        self.noise().is_empty()
    }

    /// Noise draws for this problem from `payload`. Analytic problems ignore
    /// the payload and see a single empty sample.
    fn draws(&self, payload: &CrnPayload) -> Result<Draws> {
        if self.is_analytic() {
            Ok(Draws::analytic())
        } else {
            payload.draws(&self.noise())
        }
    }
}

/// The principal's per-sample utility as a [`SampleFn`].
pub struct Principal<'a, P: ?Sized>(pub &'a P);

/// The agent's per-sample utility as a [`SampleFn`].
pub struct Agent<'a, P: ?Sized>(pub &'a P);

impl<P: Bilevel + ?Sized> SampleFn for Principal<'_, P> {
    fn eval<S: Scalar>(&self, a: &[S], t: &[S], z: &[f64]) -> S {
        self.0.principal(a, t, z)
    }
}

impl<P: Bilevel + ?Sized> SampleFn for Agent<'_, P> {
    fn eval<S: Scalar>(&self, a: &[S], t: &[S], z: &[f64]) -> S {
        self.0.agent(a, t, z)
    }
}

/// Where a reference solution came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthSource {
    ClosedForm,
    GridSearch,
}

/// Reference optimum `(a*, t*)` with the utilities attained there.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub a_star: Vec<f64>,
    pub t_star: Vec<f64>,
    pub u1_star: f64,
    pub u2_star: f64,
    pub source: TruthSource,
}
