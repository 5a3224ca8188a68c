//! Damped Newton's method for the regularized objective and exact
//! leave-one-out refits.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::glm::ObjectiveSpec;
use crate::hessian::HessianFactor;

/// Maximum number of step halvings per Newton iteration.
const MAX_HALVINGS: usize = 30;

/// Relative gradient tolerance used by [`SolverConfig::default`].
pub const DEFAULT_RELATIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    /// Stop when `‖∇L‖ ≤ tol`.
    Absolute(f64),
    /// Stop when `‖∇L‖ ≤ tol · max(1, ‖∇L(init)‖)`.
    Relative(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol: Tolerance,
    pub max_iter: usize,
    /// Step halving until the objective decreases.
    pub damping: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: Tolerance::Relative(DEFAULT_RELATIVE_TOL),
            max_iter: 100,
            damping: true,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        let t = match self.tol {
            Tolerance::Absolute(t) | Tolerance::Relative(t) => t,
        };
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!(
                "solver tolerance must be positive, got {t}"
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        Ok(())
    }

    fn threshold(&self, initial_grad_norm: f64) -> f64 {
        match self.tol {
            Tolerance::Absolute(t) => t,
            Tolerance::Relative(t) => t * initial_grad_norm.max(1.0),
        }
    }
}

/// Outcome of a Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub objective_value: f64,
    pub converged: bool,
    /// Gradient-norm threshold that was in force.
    pub tol: f64,
    /// Objective value after each accepted iterate, starting with the initial one.
    pub trace: Vec<f64>,
}

/// Minimizes the full objective starting from `init`.
pub fn newton_fit(spec: &ObjectiveSpec, init: &DVector<f64>, config: &SolverConfig) -> Result<FitResult> {
    newton(spec, init, config, None)
}

/// Minimizes the objective with training point `leave_out` removed, starting
/// from `warm_start` (normally the full-data fit).
pub fn loo_refit(
    spec: &ObjectiveSpec,
    leave_out: usize,
    warm_start: &DVector<f64>,
    config: &SolverConfig,
) -> Result<FitResult> {
    if leave_out >= spec.n() {
        return Err(Error::invalid(format!(
            "leave-out index {leave_out} out of range for n = {}",
            spec.n()
        )));
    }
    newton(spec, warm_start, config, Some(leave_out))
}

fn newton(
    spec: &ObjectiveSpec,
    init: &DVector<f64>,
    config: &SolverConfig,
    skip: Option<usize>,
) -> Result<FitResult> {
    config.validate()?;
    spec.require_positive_lambda()?;
    spec.check_beta(init)?;

    let mut beta = init.clone();
    let (mut value, mut grad, mut d2) = spec.first_order_excluding(&beta, skip);
    let mut grad_norm = grad.norm();
    let tol = config.threshold(grad_norm);
    let mut trace = vec![value];
    let mut iterations = 0;

    while grad_norm > tol && iterations < config.max_iter {
        let factor = HessianFactor::with_curvatures(spec, &beta, &d2)?;
        let direction = factor.solve(&grad);
        // Newton decrement: predicted decrease of the quadratic model.
        let predicted = 0.5 * grad.dot(&direction);
        if !predicted.is_finite() {
            return Err(Error::SingularHessian("non-finite Newton direction".into()));
        }
        // Once the predicted decrease is below the resolution of the objective
        // a strict-decrease test is meaningless; take the full step.
        let negligible = predicted <= 64.0 * f64::EPSILON * value.abs().max(1.0);

        let mut step = 1.0;
        let mut candidate = &beta - &direction;
        if config.damping && !negligible {
            let mut halvings = 0;
            loop {
                let v = spec.value_excluding(&candidate, skip);
                if v < value {
                    break;
                }
                if halvings == MAX_HALVINGS {
                    // No descent along the Newton direction at any tried step.
                    return Ok(FitResult {
                        beta,
                        grad_norm,
                        iterations,
                        objective_value: value,
                        converged: false,
                        tol,
                        trace,
                    });
                }
                halvings += 1;
                step *= 0.5;
                candidate = &beta - &direction * step;
            }
        }

        beta = candidate;
        (value, grad, d2) = spec.first_order_excluding(&beta, skip);
        grad_norm = grad.norm();
        trace.push(value);
        iterations += 1;
    }

    Ok(FitResult {
        converged: grad_norm <= tol,
        beta,
        grad_norm,
        iterations,
        objective_value: value,
        tol,
        trace,
    })
}
