use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Numeric type an objective can be evaluated over: plain `f64`, [`Dual`]
/// for gradients, or [`HyperDual`] for second-order contractions.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
{
    fn constant(x: f64) -> Self;
    fn value(&self) -> f64;
    /// True when every component is finite.
    fn is_finite(&self) -> bool;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, p: f64) -> Self;
    fn sigmoid(self) -> Self;
    fn tanh(self) -> Self;

    /// `max(self, c)`. On a tie the unclamped branch wins, so derivatives
    /// keep flowing when the value sits exactly on the floor.
    fn max_const(self, c: f64) -> Self {
        if self.value() >= c {
            self
        } else {
            Self::constant(c)
        }
    }

    fn square(self) -> Self {
        self * self
    }
}

/// Logistic function without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Scalar for f64 {
    fn constant(x: f64) -> Self {
        x
    }
    fn value(&self) -> f64 {
        *self
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn sigmoid(self) -> Self {
        sigmoid(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
}

/// First-order dual number `f + fu·ε`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub f: f64,
    pub fu: f64,
}

impl Dual {
    pub fn new(f: f64, fu: f64) -> Self {
        Self { f, fu }
    }

    #[inline]
    fn chain(self, g: f64, dg: f64) -> Self {
        Self { f: g, fu: dg * self.fu }
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self { f: self.f + o.f, fu: self.fu + o.fu }
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self { f: self.f - o.f, fu: self.fu - o.fu }
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self { f: self.f * o.f, fu: self.fu * o.f + self.f * o.fu }
    }
}

impl Div for Dual {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.f / o.f;
        Self { f: q, fu: (self.fu - q * o.fu) / o.f }
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self { f: -self.f, fu: -self.fu }
    }
}

impl Add<f64> for Dual {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        Self { f: self.f + c, fu: self.fu }
    }
}

impl Sub<f64> for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, c: f64) -> Self {
        Self { f: self.f - c, fu: self.fu }
    }
}

impl Mul<f64> for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, c: f64) -> Self {
        Self { f: self.f * c, fu: self.fu * c }
    }
}

impl Div<f64> for Dual {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        Self { f: self.f / c, fu: self.fu / c }
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.f += o.f;
        self.fu += o.fu;
    }
}

impl Scalar for Dual {
    fn constant(x: f64) -> Self {
        Self { f: x, fu: 0.0 }
    }
    fn value(&self) -> f64 {
        self.f
    }
    fn is_finite(&self) -> bool {
        self.f.is_finite() && self.fu.is_finite()
    }
    fn exp(self) -> Self {
        let e = self.f.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.f.ln(), 1.0 / self.f)
    }
    fn sqrt(self) -> Self {
        let s = self.f.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn powf(self, p: f64) -> Self {
        self.chain(self.f.powf(p), p * self.f.powf(p - 1.0))
    }
    fn sigmoid(self) -> Self {
        let s = sigmoid(self.f);
        self.chain(s, s * (1.0 - s))
    }
    fn tanh(self) -> Self {
        let t = self.f.tanh();
        self.chain(t, 1.0 - t * t)
    }
}

/// Hyper-dual number `f + fu·ε₁ + fv·ε₂ + fuv·ε₁ε₂` with `ε₁² = ε₂² = 0`.
///
/// Seeding direction `u` in the first slot and `v` in the second makes `fuv`
/// the exact second directional derivative `uᵀ ∇²f v`; no truncation error,
/// only rounding.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HyperDual {
    pub f: f64,
    pub fu: f64,
    pub fv: f64,
    pub fuv: f64,
}

impl HyperDual {
    pub fn new(f: f64, fu: f64, fv: f64, fuv: f64) -> Self {
        Self { f, fu, fv, fuv }
    }

    /// Applies a scalar function with value `g`, first derivative `dg` and
    /// second derivative `d2g` at `self.f`.
    #[inline]
    fn chain(self, g: f64, dg: f64, d2g: f64) -> Self {
        Self {
            f: g,
            fu: dg * self.fu,
            fv: dg * self.fv,
            fuv: dg * self.fuv + d2g * self.fu * self.fv,
        }
    }

    #[inline]
    fn recip(self) -> Self {
        let r = 1.0 / self.f;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
}

impl Add for HyperDual {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self {
            f: self.f + o.f,
            fu: self.fu + o.fu,
            fv: self.fv + o.fv,
            fuv: self.fuv + o.fuv,
        }
    }
}

impl Sub for HyperDual {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self {
            f: self.f - o.f,
            fu: self.fu - o.fu,
            fv: self.fv - o.fv,
            fuv: self.fuv - o.fuv,
        }
    }
}

impl Mul for HyperDual {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self {
            f: self.f * o.f,
            fu: self.fu * o.f + self.f * o.fu,
            fv: self.fv * o.f + self.f * o.fv,
            fuv: self.fuv * o.f + self.fu * o.fv + self.fv * o.fu + self.f * o.fuv,
        }
    }
}

impl Div for HyperDual {
    type Output = Self;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl Neg for HyperDual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self { f: -self.f, fu: -self.fu, fv: -self.fv, fuv: -self.fuv }
    }
}

impl Add<f64> for HyperDual {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        Self { f: self.f + c, ..self }
    }
}

impl Sub<f64> for HyperDual {
    type Output = Self;
    #[inline]
    fn sub(self, c: f64) -> Self {
        Self { f: self.f - c, ..self }
    }
}

impl Mul<f64> for HyperDual {
    type Output = Self;
    #[inline]
    fn mul(self, c: f64) -> Self {
        Self { f: self.f * c, fu: self.fu * c, fv: self.fv * c, fuv: self.fuv * c }
    }
}

impl Div<f64> for HyperDual {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        Self { f: self.f / c, fu: self.fu / c, fv: self.fv / c, fuv: self.fuv / c }
    }
}

impl AddAssign for HyperDual {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Scalar for HyperDual {
    fn constant(x: f64) -> Self {
        Self { f: x, fu: 0.0, fv: 0.0, fuv: 0.0 }
    }
    fn value(&self) -> f64 {
        self.f
    }
    fn is_finite(&self) -> bool {
        self.f.is_finite() && self.fu.is_finite() && self.fv.is_finite() && self.fuv.is_finite()
    }
    fn exp(self) -> Self {
        let e = self.f.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let r = 1.0 / self.f;
        self.chain(self.f.ln(), r, -r * r)
    }
    fn sqrt(self) -> Self {
        let s = self.f.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.f))
    }
    fn powf(self, p: f64) -> Self {
        let pm2 = self.f.powf(p - 2.0);
        let pm1 = pm2 * self.f;
        self.chain(pm1 * self.f, p * pm1, p * (p - 1.0) * pm2)
    }
    fn sigmoid(self) -> Self {
        let s = sigmoid(self.f);
        let ds = s * (1.0 - s);
        self.chain(s, ds, ds * (1.0 - 2.0 * s))
    }
    fn tanh(self) -> Self {
        let t = self.f.tanh();
        let dt = 1.0 - t * t;
        self.chain(t, dt, -2.0 * t * dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn second_derivative<F: Fn(HyperDual) -> HyperDual>(f: F, x: f64) -> (f64, f64, f64) {
        let y = f(HyperDual::new(x, 1.0, 1.0, 0.0));
        (y.f, y.fu, y.fuv)
    }

    #[test]
    fn unary_rules_match_closed_forms() {
        let x = 0.7;
        let (f, d, dd) = second_derivative(|h| h.exp(), x);
        assert!((f - x.exp()).abs() < 1e-15 && (d - x.exp()).abs() < 1e-15 && (dd - x.exp()).abs() < 1e-15);
        let (_, d, dd) = second_derivative(|h| h.ln(), x);
        assert!((d - 1.0 / x).abs() < 1e-14 && (dd + 1.0 / (x * x)).abs() < 1e-14);
        let (_, d, dd) = second_derivative(|h| h.sqrt(), x);
        assert!((d - 0.5 / x.sqrt()).abs() < 1e-14);
        assert!((dd + 0.25 * x.powf(-1.5)).abs() < 1e-14);
        let (f, d, dd) = second_derivative(|h| h.powf(-0.2), x);
        assert!((f - x.powf(-0.2)).abs() < 1e-15);
        assert!((d + 0.2 * x.powf(-1.2)).abs() < 1e-14);
        assert!((dd - 0.24 * x.powf(-2.2)).abs() < 1e-13);
        let (_, d, dd) = second_derivative(|h| h.tanh(), x);
        let t = x.tanh();
        assert!((d - (1.0 - t * t)).abs() < 1e-15 && (dd + 2.0 * t * (1.0 - t * t)).abs() < 1e-15);
        let (_, d, dd) = second_derivative(|h| h.sigmoid(), x);
        let s = sigmoid(x);
        assert!((d - s * (1.0 - s)).abs() < 1e-15);
        assert!((dd - s * (1.0 - s) * (1.0 - 2.0 * s)).abs() < 1e-15);
    }

    #[test]
    fn quotient_rule() {
        // f(x) = x / (1 + x^2): f'' = 2x(x^2 - 3)/(1+x^2)^3
        let x = 1.3;
        let (_, _, dd) = second_derivative(|h| h / (h * h + 1.0), x);
        let expected = 2.0 * x * (x * x - 3.0) / (1.0 + x * x).powi(3);
        assert!((dd - expected).abs() < 1e-14);
    }

    #[test]
    fn clamp_tie_keeps_gradient() {
        let at_floor = HyperDual::new(0.2, 1.0, 1.0, 0.0).max_const(0.2);
        assert_eq!(at_floor.fu, 1.0);
        let below = HyperDual::new(0.1, 1.0, 1.0, 0.0).max_const(0.2);
        assert_eq!(below, HyperDual::constant(0.2));
        let above = Dual::new(0.3, 2.0).max_const(0.2);
        assert_eq!(above.fu, 2.0);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(HyperDual::new(-800.0, 1.0, 1.0, 0.0).sigmoid().is_finite());
    }

    #[test]
    fn real_evaluation_matches_value_component() {
        let f = |x: HyperDual| (x * x + 1.0).ln() * x.sigmoid() - x.sqrt() / 3.0;
        let g = |x: f64| (x * x + 1.0).ln() * sigmoid(x) - x.sqrt() / 3.0;
        for x in [0.1, 0.5, 2.0, 7.5] {
            assert_eq!(f(HyperDual::constant(x)).f, g(x));
        }
    }
}
