//! Influence of removing training point `i` on the loss at a test point `z₀`.
//!
//! Four measures are provided, all reusing one factorization of the full-data
//! Hessian `G = G(β̂)`:
//!
//! * exact: `ℓ₀(β̂₍₋ᵢ₎) − ℓ₀(β̂)` with `β̂₍₋ᵢ₎` refit from scratch;
//! * classical influence function: `ℓ̇₀ · x₀ᵀ G⁻¹ xᵢ · ℓ̇ᵢ`;
//! * leverage-corrected influence function: the classical value divided by
//!   `1 − Hᵢᵢ`, where `Hᵢᵢ = ℓ̈ᵢ · xᵢᵀ G⁻¹ xᵢ`;
//! * Newfluence: `ℓ₀(β̃ᵢ) − ℓ₀(β̂)` where
//!   `β̃ᵢ = β̂ + ℓ̇ᵢ G⁻¹xᵢ / (1 − Hᵢᵢ)` is one Newton step on the
//!   leave-one-out objective started at `β̂`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::glm::{Dataset, Loss, LossEval, ObjectiveSpec};
use crate::hessian::HessianFactor;
use crate::solver::{loo_refit, SolverConfig};

/// Leverage at or above `1 − LEVERAGE_MARGIN` is treated as degenerate.
pub const LEVERAGE_MARGIN: f64 = 1e-12;

/// A single evaluation point `z₀ = (y₀, x₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPoint {
    pub y: f64,
    pub x: DVector<f64>,
}

impl TestPoint {
    pub fn new(y: f64, x: DVector<f64>) -> Self {
        Self { y, x }
    }

    fn check(&self, spec: &ObjectiveSpec) -> Result<()> {
        if self.x.len() != spec.p() {
            return Err(Error::invalid(format!(
                "test point has {} features, expected p = {}",
                self.x.len(),
                spec.p()
            )));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite test feature"));
        }
        spec.loss().check_response(self.y)
    }

    fn loss_at(&self, loss: Loss, beta: &DVector<f64>) -> f64 {
        loss.value(self.y, self.x.dot(beta))
    }
}

/// Leverages `Hᵢᵢ` and effective degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct HatDiagnostics {
    pub h: DVector<f64>,
    pub df: f64,
    pub df_ratio: f64,
}

impl HatDiagnostics {
    fn from_leverages(h: DVector<f64>, p: usize) -> Result<Self> {
        if let Some(i) = h.iter().position(|&v| v.is_nan() || v >= 1.0 - LEVERAGE_MARGIN) {
            return Err(Error::DegenerateLeverage {
                index: i,
                leverage: h[i],
            });
        }
        let df = h.sum();
        Ok(Self {
            df_ratio: df / p as f64,
            df,
            h,
        })
    }
}

/// One row of influence output for the pair (training point, test point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfluenceRecord {
    pub train_index: usize,
    pub test_index: usize,
    pub i_true: Option<f64>,
    pub i_if: f64,
    pub i_if_corrected: f64,
    pub i_new: f64,
    pub h_ii: f64,
}

fn check_index(spec: &ObjectiveSpec, i: usize) -> Result<()> {
    if i < spec.n() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "training index {i} out of range for n = {}",
            spec.n()
        )))
    }
}

fn check_factor(spec: &ObjectiveSpec, beta_hat: &DVector<f64>, factor: &HessianFactor) -> Result<()> {
    spec.check_beta(beta_hat)?;
    if factor.dim() != spec.p() {
        return Err(Error::invalid(format!(
            "factorization has dimension {}, expected p = {}",
            factor.dim(),
            spec.p()
        )));
    }
    Ok(())
}

/// Per-training-point quantities shared by every estimator.
struct PointSolve {
    ginv_x: DVector<f64>,
    derivs: LossEval,
    h: f64,
}

fn point_solve(
    spec: &ObjectiveSpec,
    beta_hat: &DVector<f64>,
    factor: &HessianFactor,
    i: usize,
) -> Result<PointSolve> {
    check_factor(spec, beta_hat, factor)?;
    check_index(spec, i)?;
    let x_i = spec.dataset().row(i);
    let y_i = spec.dataset().responses()[i];
    let derivs = spec.loss().derivatives(y_i, x_i.dot(beta_hat));
    let ginv_x = factor.solve(&x_i);
    let h = derivs.d2 * x_i.dot(&ginv_x);
    Ok(PointSolve { ginv_x, derivs, h })
}

/// `Hᵢᵢ = ℓ̈ᵢ(β̂) · xᵢᵀ G⁻¹ xᵢ` for every training point.
pub fn hat_diagonal(
    spec: &ObjectiveSpec,
    beta_hat: &DVector<f64>,
    factor: &HessianFactor,
) -> Result<HatDiagnostics> {
    check_factor(spec, beta_hat, factor)?;
    let x = spec.dataset().features();
    let derivs = spec.sample_derivatives(beta_hat);
    let h = DVector::from_iterator(
        spec.n(),
        (0..spec.n()).map(|i| {
            let x_i = x.row(i).transpose();
            derivs[i].d2 * x_i.dot(&factor.solve(&x_i))
        }),
    );
    HatDiagnostics::from_leverages(h, spec.p())
}

/// Classical influence function `ℓ̇₀(β̂) · x₀ᵀ G⁻¹ xᵢ · ℓ̇ᵢ(β̂)`.
pub fn classical_if(
    spec: &ObjectiveSpec,
    beta_hat: &DVector<f64>,
    factor: &HessianFactor,
    i: usize,
    z0: &TestPoint,
) -> Result<f64> {
    z0.check(spec)?;
    let ps = point_solve(spec, beta_hat, factor, i)?;
    let d1_0 = spec.loss().derivatives(z0.y, z0.x.dot(beta_hat)).d1;
    Ok(d1_0 * z0.x.dot(&ps.ginv_x) * ps.derivs.d1)
}

/// `I^IF / (1 − Hᵢᵢ)`.
pub fn corrected_if(i_if: f64, h_ii: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&h_ii) {
        return Err(Error::DegenerateLeverage {
            index: usize::MAX,
            leverage: h_ii,
        });
    }
    Ok(i_if / (1.0 - h_ii))
}

/// Applies `G₍₋ᵢ₎⁻¹ = (G − dᵢ xᵢxᵢᵀ)⁻¹` using only the factorization of `G`.
#[derive(Debug)]
pub struct DowndatedInverse<'f, 'a> {
    factor: &'f HessianFactor<'a>,
    ginv_x: DVector<f64>,
    coefficient: f64,
}

impl DowndatedInverse<'_, '_> {
    /// `G⁻¹v + G⁻¹xᵢ (xᵢᵀG⁻¹v) · dᵢ / (1 − dᵢ xᵢᵀG⁻¹xᵢ)`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self.factor.solve(v);
        let proj = self.ginv_x.dot(v);
        out.axpy(self.coefficient * proj, &self.ginv_x, 1.0);
        out
    }

    /// Dense matrix of the operator.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut m = self.factor.inverse();
        m.ger(self.coefficient, &self.ginv_x, &self.ginv_x, 1.0);
        m
    }
}

/// Woodbury rank-one downdate of a factorized `G`.
pub fn woodbury_downdate<'f, 'a>(
    factor: &'f HessianFactor<'a>,
    x_i: &DVector<f64>,
    d_i: f64,
) -> Result<DowndatedInverse<'f, 'a>> {
    if x_i.len() != factor.dim() {
        return Err(Error::invalid(format!(
            "downdate vector has length {}, expected {}",
            x_i.len(),
            factor.dim()
        )));
    }
    if !(d_i >= 0.0 && d_i.is_finite()) {
        return Err(Error::invalid(format!("downdate weight must be >= 0, got {d_i}")));
    }
    let ginv_x = factor.solve(x_i);
    let leverage = d_i * x_i.dot(&ginv_x);
    let denom = 1.0 - leverage;
    if denom <= LEVERAGE_MARGIN {
        return Err(Error::DegenerateLeverage {
            index: usize::MAX,
            leverage,
        });
    }
    Ok(DowndatedInverse {
        factor,
        ginv_x,
        coefficient: d_i / denom,
    })
}

fn newton_step(beta_hat: &DVector<f64>, ps: &PointSolve, index: usize) -> Result<DVector<f64>> {
    if ps.h.is_nan() || ps.h >= 1.0 - LEVERAGE_MARGIN {
        return Err(Error::DegenerateLeverage {
            index,
            leverage: ps.h,
        });
    }
    Ok(beta_hat + &ps.ginv_x * (ps.derivs.d1 / (1.0 - ps.h)))
}

/// One Newton step on the leave-`i`-out objective from `β̂`:
/// `β̂ + ℓ̇ᵢ(β̂) G⁻¹xᵢ / (1 − Hᵢᵢ)`.
pub fn newton_loo_beta(
    spec: &ObjectiveSpec,
    beta_hat: &DVector<f64>,
    factor: &HessianFactor,
    i: usize,
) -> Result<DVector<f64>> {
    let ps = point_solve(spec, beta_hat, factor, i)?;
    newton_step(beta_hat, &ps, i)
}

/// `ℓ₀(β̃ᵢ) − ℓ₀(β̂)` with `β̃ᵢ` from [`newton_loo_beta`].
pub fn newfluence(
    spec: &ObjectiveSpec,
    beta_hat: &DVector<f64>,
    factor: &HessianFactor,
    i: usize,
    z0: &TestPoint,
) -> Result<f64> {
    z0.check(spec)?;
    let beta_tilde = newton_loo_beta(spec, beta_hat, factor, i)?;
    Ok(z0.loss_at(spec.loss(), &beta_tilde) - z0.loss_at(spec.loss(), beta_hat))
}

/// `ℓ₀(β̂₍₋ᵢ₎) − ℓ₀(β̂)` with an exact refit.
pub fn true_influence(
    spec: &ObjectiveSpec,
    beta_hat: &DVector<f64>,
    i: usize,
    z0: &TestPoint,
    config: &SolverConfig,
) -> Result<f64> {
    z0.check(spec)?;
    let beta_loo = exact_loo_beta(spec, beta_hat, i, config)?;
    Ok(z0.loss_at(spec.loss(), &beta_loo) - z0.loss_at(spec.loss(), beta_hat))
}

fn exact_loo_beta(
    spec: &ObjectiveSpec,
    beta_hat: &DVector<f64>,
    i: usize,
    config: &SolverConfig,
) -> Result<DVector<f64>> {
    let fit = loo_refit(spec, i, beta_hat, config)?;
    if !fit.converged {
        return Err(Error::SingularHessian(format!(
            "leave-one-out refit for point {i} did not converge (gradient norm {:.3e} after {} iterations)",
            fit.grad_norm, fit.iterations
        )));
    }
    Ok(fit.beta)
}

/// Exact leave-one-out coefficients for every training point, as columns of a
/// `p × n` matrix. Refits run in parallel on the current rayon pool.
pub fn loo_betas(
    spec: &ObjectiveSpec,
    beta_hat: &DVector<f64>,
    config: &SolverConfig,
) -> Result<DMatrix<f64>> {
    let cols = (0..spec.n())
        .into_par_iter()
        .map(|i| exact_loo_beta(spec, beta_hat, i, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&cols))
}

/// Precomputed per-training-point state for evaluating all estimators over
/// many test points. Holds `G⁻¹xᵢ` for every `i`, so it no longer needs the
/// factorization once built.
#[derive(Debug, Clone)]
pub struct InfluenceEngine {
    loss: Loss,
    beta_hat: DVector<f64>,
    /// Column `i` is `G⁻¹xᵢ`.
    ginv_xt: DMatrix<f64>,
    d1: DVector<f64>,
    hat: HatDiagnostics,
}

impl InfluenceEngine {
    pub fn new(spec: &ObjectiveSpec, beta_hat: &DVector<f64>, factor: &HessianFactor) -> Result<Self> {
        check_factor(spec, beta_hat, factor)?;
        let x = spec.dataset().features();
        let ginv_xt = factor.solve_matrix(&x.transpose());
        let derivs = spec.sample_derivatives(beta_hat);
        let h = DVector::from_iterator(
            spec.n(),
            (0..spec.n()).map(|i| derivs[i].d2 * x.row(i).transpose().dot(&ginv_xt.column(i))),
        );
        Ok(Self {
            loss: spec.loss(),
            beta_hat: beta_hat.clone(),
            ginv_xt,
            d1: DVector::from_iterator(spec.n(), derivs.iter().map(|e| e.d1)),
            hat: HatDiagnostics::from_leverages(h, spec.p())?,
        })
    }

    pub fn n(&self) -> usize {
        self.ginv_xt.ncols()
    }

    pub fn p(&self) -> usize {
        self.ginv_xt.nrows()
    }

    pub fn beta_hat(&self) -> &DVector<f64> {
        &self.beta_hat
    }

    pub fn hat(&self) -> &HatDiagnostics {
        &self.hat
    }

    /// `G⁻¹xᵢ`.
    pub fn ginv_x(&self, i: usize) -> DVector<f64> {
        self.ginv_xt.column(i).into_owned()
    }

    /// All one-step-Newton leave-one-out coefficients as columns.
    pub fn newton_betas(&self) -> DMatrix<f64> {
        let mut out = self.ginv_xt.clone();
        for (i, mut col) in out.column_iter_mut().enumerate() {
            col *= self.d1[i] / (1.0 - self.hat.h[i]);
            col += &self.beta_hat;
        }
        out
    }

    /// Records for every (training point, test point) pair, ordered
    /// training-major. `loo` holds exact leave-one-out coefficients as columns
    /// when the exact influence is wanted.
    pub fn evaluate(&self, test: &Dataset, loo: Option<&DMatrix<f64>>) -> Result<Vec<InfluenceRecord>> {
        let (n, p) = (self.n(), self.p());
        if test.p() != p {
            return Err(Error::invalid(format!(
                "test set has {} features, expected p = {p}",
                test.p()
            )));
        }
        if let Some(b) = loo {
            if b.shape() != (p, n) {
                return Err(Error::invalid(format!(
                    "leave-one-out coefficients have shape {:?}, expected ({p}, {n})",
                    b.shape()
                )));
            }
        }
        let m = test.n();
        let y0 = test.responses();
        for &y in y0.iter() {
            self.loss.check_response(y)?;
        }
        let x0 = test.features();
        let u0 = x0 * &self.beta_hat;
        let base: Vec<LossEval> = (0..m).map(|t| self.loss.derivatives(y0[t], u0[t])).collect();
        // cross[t, i] = x₀ₜᵀ G⁻¹ xᵢ
        let cross = x0 * &self.ginv_xt;
        let u_true = loo.map(|b| x0 * b);

        let mut records = Vec::with_capacity(n * m);
        for i in 0..n {
            let h = self.hat.h[i];
            let scale = self.d1[i] / (1.0 - h);
            for t in 0..m {
                let c = cross[(t, i)];
                let i_if = base[t].d1 * c * self.d1[i];
                let i_new = self.loss.value(y0[t], u0[t] + scale * c) - base[t].value;
                let i_true = u_true
                    .as_ref()
                    .map(|u| self.loss.value(y0[t], u[(t, i)]) - base[t].value);
                records.push(InfluenceRecord {
                    train_index: i,
                    test_index: t,
                    i_true,
                    i_if,
                    i_if_corrected: i_if / (1.0 - h),
                    i_new,
                    h_ii: h,
                });
            }
        }
        Ok(records)
    }
}
