//! Classical fixed-step fourth-order Runge–Kutta.
//!
//! The stepper is generic over the vector algebra so one code path serves
//! plain `Vec<f64>` data generation and taped (differentiable) rollouts.

use crate::ad::{Tape, Var};
use crate::error::{Error, Result};

/// The two vector operations RK4 needs.
pub trait StepAlgebra {
    type Vector;

    /// `x + alpha * y`
    fn axpy(&mut self, x: &Self::Vector, alpha: f64, y: &Self::Vector) -> Result<Self::Vector>;

    fn all_finite(&self, x: &Self::Vector) -> bool;
}

/// Untaped `Vec<f64>` arithmetic.
#[derive(Debug, Default, Clone, Copy)]
pub struct Plain;

impl StepAlgebra for Plain {
    type Vector = Vec<f64>;

    fn axpy(&mut self, x: &Vec<f64>, alpha: f64, y: &Vec<f64>) -> Result<Vec<f64>> {
        if x.len() != y.len() {
            return Err(Error::dim("axpy", format!("lengths {} and {}", x.len(), y.len())));
        }
        Ok(x.iter().zip(y).map(|(a, b)| a + alpha * b).collect())
    }

    fn all_finite(&self, x: &Vec<f64>) -> bool {
        x.iter().all(|v| v.is_finite())
    }
}

impl StepAlgebra for Tape {
    type Vector = Var;

    fn axpy(&mut self, x: &Var, alpha: f64, y: &Var) -> Result<Var> {
        Tape::axpy(self, *x, alpha, *y)
    }

    fn all_finite(&self, x: &Var) -> bool {
        self.value(*x).iter().all(|v| v.is_finite())
    }
}

/// One step `x + (dt/6)(k1 + 2k2 + 2k3 + k4)`.
pub fn rk4_step<A, F>(alg: &mut A, mut f: F, x: &A::Vector, dt: f64) -> Result<A::Vector>
where
    A: StepAlgebra,
    F: FnMut(&mut A, &A::Vector) -> Result<A::Vector>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidParam(format!("time step must be > 0, got {dt}")));
    }
    let k1 = f(alg, x)?;
    let x2 = alg.axpy(x, 0.5 * dt, &k1)?;
    let k2 = f(alg, &x2)?;
    let x3 = alg.axpy(x, 0.5 * dt, &k2)?;
    let k3 = f(alg, &x3)?;
    let x4 = alg.axpy(x, dt, &k3)?;
    let k4 = f(alg, &x4)?;
    let s = alg.axpy(&k1, 2.0, &k2)?;
    let s = alg.axpy(&s, 2.0, &k3)?;
    let s = alg.axpy(&s, 1.0, &k4)?;
    let out = alg.axpy(x, dt / 6.0, &s)?;
    if !alg.all_finite(&out) {
        return Err(Error::Divergence("non-finite state after RK4 step".into()));
    }
    Ok(out)
}

/// Convenience wrapper for untaped vector fields.
pub fn rk4_step_plain<F>(mut f: F, x: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    rk4_step(&mut Plain, |_, v: &Vec<f64>| f(v), &x.to_vec(), dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.iter().map(|v| -v).collect())
    }

    #[test]
    fn one_step_of_linear_decay() {
        let y = rk4_step_plain(decay, &[1.0], 0.1).unwrap();
        // 1 - h + h²/2 - h³/6 + h⁴/24 at h = 0.1
        let hand = 1.0 - 0.1 + 0.01 / 2.0 - 0.001 / 6.0 + 0.0001 / 24.0;
        assert!((y[0] - hand).abs() < 1e-15);
        assert!((y[0] - 0.9048375).abs() < 5e-8);
        assert!((y[0] - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn zero_field_is_identity() {
        let x = [0.3, -2.0, 5.5];
        let y = rk4_step_plain(|v| Ok(vec![0.0; v.len()]), &x, 0.25).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn rejects_bad_step_and_flags_divergence() {
        assert!(rk4_step_plain(decay, &[1.0], 0.0).is_err());
        let err = rk4_step_plain(|_| Ok(vec![f64::INFINITY]), &[1.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
    }
}
