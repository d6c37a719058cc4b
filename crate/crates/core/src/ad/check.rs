//! Central-difference gradient oracle for taped scalar functions.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const GRAD_FLOOR: f64 = 1e-6;

/// Compare reverse-mode gradients of `f` against central differences.
///
/// `f` receives a fresh tape and one differentiable leaf per entry of
/// `params`, and must return a scalar node. The result is the worst
/// component-wise relative error `|g_ad − g_fd| / max(|g_ad|, |g_fd|, 1e-6)`.
/// The floor keeps exactly-zero gradients from being judged on
/// finite-difference rounding noise.
pub fn finite_diff_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidParam(format!("eps must be > 0, got {eps}")));
    }
    let analytic: Vec<Vec<f64>> = {
        let mut tape = Tape::new();
        let vars = params.iter().map(|p| tape.param(p)).collect::<Result<Vec<_>>>()?;
        let root = f(&mut tape, &vars)?;
        let grads = tape.backward(root)?;
        vars.iter().map(|&v| grads.get(v).to_vec()).collect()
    };

    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = ps.iter().map(|p| tape.constant(p)).collect::<Result<Vec<_>>>()?;
        let root = f(&mut tape, &vars)?;
        Ok(tape.scalar(root))
    };

    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, g) in analytic.iter().enumerate() {
        for (j, &ga) in g.iter().enumerate() {
            let orig = work[pi].data()[j];
            work[pi].data_mut()[j] = orig + eps;
            let up = eval(&work)?;
            work[pi].data_mut()[j] = orig - eps;
            let down = eval(&work)?;
            work[pi].data_mut()[j] = orig;
            let gf = (up - down) / (2.0 * eps);
            let rel = (ga - gf).abs() / ga.abs().max(gf.abs()).max(GRAD_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
