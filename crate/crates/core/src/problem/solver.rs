//! Reference minimiser used to measure optimality gaps.

use crate::error::{Error, Result};
use crate::numerics::RealVector;

use super::objective::SmoothObjective;

/// Iteration cap of the reference gradient descent.
pub const REFERENCE_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub x_star: RealVector,
    pub f_star: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Minimises a strongly convex objective to `|grad f(x*)| <= tol`.
///
/// Uses the closed form when the objective provides one, otherwise gradient
/// descent from the origin with stepsize `1/L`.
pub fn reference_solution(obj: &dyn SmoothObjective, tol: f64) -> Result<ReferenceSolution> {
    if let Some(x_star) = obj.exact_minimizer() {
        let grad_norm = obj.full_gradient(&x_star)?.norm();
        if grad_norm <= tol {
            let f_star = obj.value(&x_star)?;
            return Ok(ReferenceSolution {
                x_star,
                f_star,
                grad_norm,
                iterations: 0,
            });
        }
    }
    gradient_descent(obj, RealVector::zeros(obj.dim()), tol, REFERENCE_MAX_ITERS)
}

pub fn gradient_descent(
    obj: &dyn SmoothObjective,
    start: RealVector,
    tol: f64,
    max_iters: usize,
) -> Result<ReferenceSolution> {
    let step = 1.0 / obj.smoothness().global;
    let mut x = start;
    let mut grad = obj.full_gradient(&x)?;
    let mut iterations = 0;
    while grad.norm() > tol {
        if iterations == max_iters {
            return Err(Error::NonConvergence {
                iterations,
                grad_norm: grad.norm(),
            });
        }
        x.axpy(-step, &grad);
        grad = obj.full_gradient(&x)?;
        iterations += 1;
    }
    let f_star = obj.value(&x)?;
    Ok(ReferenceSolution {
        x_star: x,
        f_star,
        grad_norm: grad.norm(),
        iterations,
    })
}
