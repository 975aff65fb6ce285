//! Matrix-free conjugate gradient for symmetric positive definite systems.

use crate::error::{Error, Result};

/// A linear operator known only through its action on vectors.
pub trait SpdOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Result<Vec<f64>>> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> Result<Vec<f64>>> SpdOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        (self.f)(v)
    }
}

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    n: usize,
    data: Vec<f64>,
}

impl DenseOperator {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Shape { expected: n * n, got: data.len() });
        }
        Ok(Self { n, data })
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, &x) in d.iter().enumerate() {
            data[i * n + i] = x;
        }
        Self { n, data }
    }
}

impl SpdOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::Shape { expected: self.n, got: v.len() });
        }
        Ok(self.data.chunks(self.n).map(|row| dot(row, v)).collect())
    }
}

/// `v ↦ -hvp(v) + λ v`: turns the (negative semidefinite) Hessian of a
/// maximization into a positive definite operator.
pub struct Damped<Op> {
    hvp: Op,
    lambda: f64,
}

pub fn damped<Op: SpdOperator>(hvp: Op, lambda: f64) -> Damped<Op> {
    Damped { hvp, lambda }
}

impl<Op: SpdOperator> SpdOperator for Damped<Op> {
    fn dim(&self) -> usize {
        self.hvp.dim()
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let hv = self.hvp.apply(v)?;
        Ok(hv.iter().zip(v).map(|(h, x)| -h + self.lambda * x).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub final_residual_norm: f64,
    pub converged: bool,
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Solves `A v = b` by conjugate gradients, starting from zero.
///
/// Stops once `‖r‖ ≤ eps` or after `max_iter` iterations. If the budget runs
/// out the last iterate is returned with `converged = false`.
pub fn conjugate_gradient<A: SpdOperator>(
    op: &A,
    b: &[f64],
    max_iter: usize,
    eps: f64,
) -> Result<CgReport> {
    conjugate_gradient_from(op, b, None, max_iter, eps)
}

/// [`conjugate_gradient`] with an optional initial guess.
pub fn conjugate_gradient_from<A: SpdOperator>(
    op: &A,
    b: &[f64],
    start: Option<&[f64]>,
    max_iter: usize,
    eps: f64,
) -> Result<CgReport> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::Shape { expected: n, got: b.len() });
    }
    let (mut v, mut r) = match start {
        Some(v0) => {
            if v0.len() != n {
                return Err(Error::Shape { expected: n, got: v0.len() });
            }
            let av = op.apply(v0)?;
            (v0.to_vec(), b.iter().zip(&av).map(|(bi, ai)| bi - ai).collect::<Vec<_>>())
        }
        // A(0) = 0, so the residual is b itself.
        None => (vec![0.0; n], b.to_vec()),
    };
    let mut p = r.clone();
    let mut rho = dot(&r, &r);
    if !rho.is_finite() {
        return Err(Error::CgNonFinite { iteration: 0 });
    }
    let mut iterations = 0;
    for k in 1..=max_iter {
        if rho.sqrt() <= eps {
            break;
        }
        let q = op.apply(&p)?;
        let curvature = dot(&p, &q);
        if !curvature.is_finite() {
            return Err(Error::CgNonFinite { iteration: k });
        }
        if curvature <= 0.0 {
            return Err(Error::Curvature { iteration: k, curvature });
        }
        let alpha = rho / curvature;
        for i in 0..n {
            v[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let rho_new = dot(&r, &r);
        if !rho_new.is_finite() {
            return Err(Error::CgNonFinite { iteration: k });
        }
        let beta = rho_new / rho;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rho = rho_new;
        iterations = k;
    }
    let final_residual_norm = rho.sqrt();
    Ok(CgReport {
        solution: v,
        iterations,
        final_residual_norm,
        converged: final_residual_norm <= eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_in_one_step() {
        let op = DenseOperator::diagonal(&[1.0; 4]);
        let b = [0.3, -2.0, 5.5, 1e-3];
        let rep = conjugate_gradient(&op, &b, 10, 1e-12).unwrap();
        assert_eq!(rep.solution, b.to_vec());
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
    }

    #[test]
    fn diagonal_two_by_two() {
        let op = DenseOperator::diagonal(&[2.0, 4.0]);
        let rep = conjugate_gradient(&op, &[2.0, 4.0], 20, 1e-12).unwrap();
        assert!(rep.iterations <= 2);
        assert!((rep.solution[0] - 1.0).abs() < 1e-14 && (rep.solution[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn damping_shifts_the_spectrum() {
        let id = damped(DenseOperator::diagonal(&[-1.0, -1.0]), 0.0);
        assert_eq!(id.apply(&[3.0, -4.0]).unwrap(), vec![3.0, -4.0]);
        let op = damped(DenseOperator::diagonal(&[-1.0, -2.0]), 0.5);
        assert_eq!(op.apply(&[1.0, 1.0]).unwrap(), vec![1.5, 2.5]);
    }

    #[test]
    fn indefinite_operator_is_rejected() {
        let op = DenseOperator::diagonal(&[1.0, -1.0]);
        let err = conjugate_gradient(&op, &[0.0, 1.0], 5, 1e-12).unwrap_err();
        assert!(matches!(err, Error::Curvature { iteration: 1, .. }));
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let op = DenseOperator::diagonal(&[1.0, 10.0, 100.0]);
        let rep = conjugate_gradient(&op, &[1.0, 1.0, 1.0], 1, 1e-12).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(!rep.converged);
        assert!(rep.final_residual_norm > 1e-12);
    }

    #[test]
    fn warm_start_at_solution_does_no_work() {
        let op = DenseOperator::diagonal(&[2.0, 4.0]);
        let rep = conjugate_gradient_from(&op, &[2.0, 4.0], Some(&[1.0, 1.0]), 5, 1e-12).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let op = DenseOperator::diagonal(&[3.0, 5.0]);
        let rep = conjugate_gradient(&op, &[0.0, 0.0], 5, 1e-8).unwrap();
        assert_eq!(rep.solution, vec![0.0, 0.0]);
        assert_eq!(rep.iterations, 0);
    }
}
