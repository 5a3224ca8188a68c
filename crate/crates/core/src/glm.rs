//! Losses, separable regularizers and the regularized empirical risk
//!
//! ```text
//! L(β) = Σⱼ ℓ(yⱼ, xⱼᵀβ) + λ r(β)
//! ```
//!
//! together with its gradient and Hessian
//! `G(β) = Σⱼ xⱼxⱼᵀ ℓ̈ⱼ(β) + λ ∇²r(β)`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Training (or test) data: row `i` of `features` is `xᵢ`, `responses[i]` is `yᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    responses: DVector<f64>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, responses: DVector<f64>) -> Result<Self> {
        let (n, p) = features.shape();
        if n == 0 || p == 0 {
            return Err(Error::invalid(format!(
                "dataset must have n >= 1 and p >= 1, got {n}x{p}"
            )));
        }
        if responses.len() != n {
            return Err(Error::invalid(format!(
                "{} responses for {n} feature rows",
                responses.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature entry"));
        }
        if responses.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite response"));
        }
        Ok(Self { features, responses })
    }

    /// Builds a dataset from row-major feature storage.
    pub fn from_row_major(n: usize, p: usize, features: &[f64], responses: &[f64]) -> Result<Self> {
        if features.len() != n * p {
            return Err(Error::invalid(format!(
                "expected {} feature entries for {n}x{p}, got {}",
                n * p,
                features.len()
            )));
        }
        Self::new(
            DMatrix::from_row_slice(n, p, features),
            DVector::from_column_slice(responses),
        )
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn responses(&self) -> &DVector<f64> {
        &self.responses
    }

    /// Copy of row `i` as a column vector.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }
}

/// Per-sample loss `ℓ(y, u)` as a function of the linear predictor `u = xᵀβ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Loss {
    /// `½(y − u)²`
    Squared,
    /// Negative Bernoulli log-likelihood with `y ∈ {0, 1}`: `log(1 + eᵘ) − y·u`.
    Logistic,
}

/// Value and first two derivatives of a loss in `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + eᵘ)` without overflow for large `|u|`.
fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

impl Loss {
    /// Checks that `y` is an admissible response for this loss.
    pub fn check_response(self, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::invalid(format!("non-finite response {y}")));
        }
        match self {
            Loss::Squared => Ok(()),
            Loss::Logistic if y == 0.0 || y == 1.0 => Ok(()),
            Loss::Logistic => Err(Error::Domain(format!(
                "logistic response must be 0 or 1, got {y}"
            ))),
        }
    }

    /// Unchecked value; callers validate `y` beforehand.
    #[inline]
    pub(crate) fn value(self, y: f64, u: f64) -> f64 {
        match self {
            Loss::Squared => 0.5 * (y - u) * (y - u),
            Loss::Logistic => softplus(u) - y * u,
        }
    }

    #[inline]
    pub(crate) fn derivatives(self, y: f64, u: f64) -> LossEval {
        match self {
            Loss::Squared => LossEval {
                value: 0.5 * (y - u) * (y - u),
                d1: u - y,
                d2: 1.0,
            },
            Loss::Logistic => {
                let s = sigmoid(u);
                LossEval {
                    value: softplus(u) - y * u,
                    d1: s - y,
                    d2: s * (1.0 - s),
                }
            }
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::Squared => "squared",
            Loss::Logistic => "logistic",
        })
    }
}

/// Evaluates `(ℓ(y,u), ℓ̇(y,u), ℓ̈(y,u))`.
pub fn loss_eval(loss: Loss, y: f64, u: f64) -> Result<LossEval> {
    if !u.is_finite() {
        return Err(Error::invalid(format!("non-finite linear predictor {u}")));
    }
    loss.check_response(y)?;
    Ok(loss.derivatives(y, u))
}

/// Scaling of the ridge penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RidgeConvention {
    /// `r(β) = ‖β‖²`, curvature 2 per coordinate.
    SquaredNorm,
    /// `r(β) = ½‖β‖²`, curvature 1 per coordinate.
    #[default]
    HalfSquaredNorm,
}

impl RidgeConvention {
    pub fn curvature(self) -> f64 {
        match self {
            RidgeConvention::SquaredNorm => 2.0,
            RidgeConvention::HalfSquaredNorm => 1.0,
        }
    }
}

/// Per-coordinate penalty returning `(rₖ(b), rₖ'(b), rₖ''(b))`.
pub type CoordinatePenalty = dyn Fn(f64) -> (f64, f64, f64) + Send + Sync;

/// A separable penalty supplied by the caller.
#[derive(Clone)]
pub struct SeparablePenalty {
    coordinate: Arc<CoordinatePenalty>,
    nu: f64,
}

impl SeparablePenalty {
    /// `nu` is the claimed lower bound on the per-coordinate second derivative;
    /// it is checked on every evaluation.
    pub fn new<F>(nu: f64, coordinate: F) -> Result<Self>
    where
        F: Fn(f64) -> (f64, f64, f64) + Send + Sync + 'static,
    {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::invalid(format!(
                "strong convexity constant must be positive, got {nu}"
            )));
        }
        Ok(Self {
            coordinate: Arc::new(coordinate),
            nu,
        })
    }
}

impl fmt::Debug for SeparablePenalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SeparablePenalty")
            .field("nu", &self.nu)
            .finish_non_exhaustive()
    }
}

/// Separable, strongly convex, twice differentiable penalty `r(β) = Σₖ rₖ(βₖ)`.
#[derive(Debug, Clone)]
pub enum Regularizer {
    Ridge(RidgeConvention),
    Separable(SeparablePenalty),
}

/// Value, gradient and diagonal Hessian of a regularizer.
#[derive(Debug, Clone, PartialEq)]
pub struct RegEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess_diag: DVector<f64>,
}

impl Regularizer {
    /// Strong convexity constant ν.
    pub fn nu(&self) -> f64 {
        match self {
            Regularizer::Ridge(c) => c.curvature(),
            Regularizer::Separable(s) => s.nu,
        }
    }

    /// Curvature when it does not depend on β.
    pub(crate) fn constant_curvature(&self) -> Option<f64> {
        match self {
            Regularizer::Ridge(c) => Some(c.curvature()),
            Regularizer::Separable(_) => None,
        }
    }

    pub(crate) fn value(&self, beta: &DVector<f64>) -> f64 {
        match self {
            Regularizer::Ridge(c) => 0.5 * c.curvature() * beta.norm_squared(),
            Regularizer::Separable(s) => beta.iter().map(|&b| (s.coordinate)(b).0).sum(),
        }
    }

    pub(crate) fn grad_into(&self, beta: &DVector<f64>, out: &mut DVector<f64>, scale: f64) {
        match self {
            Regularizer::Ridge(c) => out.axpy(scale * c.curvature(), beta, 1.0),
            Regularizer::Separable(s) => {
                for (o, &b) in out.iter_mut().zip(beta.iter()) {
                    *o += scale * (s.coordinate)(b).1;
                }
            }
        }
    }

    pub(crate) fn hess_diag(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Regularizer::Ridge(c) => Ok(DVector::from_element(beta.len(), c.curvature())),
            Regularizer::Separable(s) => {
                let h = beta.map(|b| (s.coordinate)(b).2);
                if let Some(k) = h.iter().position(|&v| v.is_nan() || v < s.nu) {
                    return Err(Error::Domain(format!(
                        "penalty curvature {} at coordinate {k} is below nu = {}",
                        h[k], s.nu
                    )));
                }
                Ok(h)
            }
        }
    }
}

/// Evaluates `(r(β), ∇r(β), diag ∇²r(β))`.
pub fn reg_eval(reg: &Regularizer, beta: &DVector<f64>) -> Result<RegEval> {
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite coefficient"));
    }
    let mut grad = DVector::zeros(beta.len());
    reg.grad_into(beta, &mut grad, 1.0);
    Ok(RegEval {
        value: reg.value(beta),
        grad,
        hess_diag: reg.hess_diag(beta)?,
    })
}

/// A regularized empirical risk minimization problem.
#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    dataset: Dataset,
    loss: Loss,
    regularizer: Regularizer,
    lambda: f64,
    /// `X Xᵀ`, built on first use by the dual Hessian factorization.
    gram: OnceLock<DMatrix<f64>>,
}

impl ObjectiveSpec {
    pub fn new(dataset: Dataset, loss: Loss, regularizer: Regularizer, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        for &y in dataset.responses().iter() {
            loss.check_response(y)?;
        }
        Ok(Self {
            dataset,
            loss,
            regularizer,
            lambda,
            gram: OnceLock::new(),
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.dataset.n()
    }

    pub fn p(&self) -> usize {
        self.dataset.p()
    }

    pub(crate) fn gram(&self) -> &DMatrix<f64> {
        self.gram.get_or_init(|| {
            let x = self.dataset.features();
            x * x.transpose()
        })
    }

    pub(crate) fn require_positive_lambda(&self) -> Result<()> {
        if self.lambda > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("lambda must be positive for this operation"))
        }
    }

    pub(crate) fn check_beta(&self, beta: &DVector<f64>) -> Result<()> {
        if beta.len() != self.p() {
            return Err(Error::invalid(format!(
                "coefficient vector has length {}, expected p = {}",
                beta.len(),
                self.p()
            )));
        }
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite coefficient"));
        }
        Ok(())
    }

    /// Linear predictors `Xβ`.
    pub fn predictors(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.dataset.features() * beta
    }

    /// Objective value with training point `skip` (if any) removed.
    pub(crate) fn value_excluding(&self, beta: &DVector<f64>, skip: Option<usize>) -> f64 {
        let u = self.predictors(beta);
        let y = self.dataset.responses();
        let data: f64 = (0..self.n())
            .filter(|&j| Some(j) != skip)
            .map(|j| self.loss.value(y[j], u[j]))
            .sum();
        data + self.lambda * self.regularizer.value(beta)
    }

    /// Value, gradient and per-sample curvatures `ℓ̈ⱼ` (zero for `skip`).
    pub(crate) fn first_order_excluding(
        &self,
        beta: &DVector<f64>,
        skip: Option<usize>,
    ) -> (f64, DVector<f64>, DVector<f64>) {
        let u = self.predictors(beta);
        let y = self.dataset.responses();
        let n = self.n();
        let mut d1 = DVector::zeros(n);
        let mut d2 = DVector::zeros(n);
        let mut value = 0.0;
        for j in 0..n {
            if Some(j) == skip {
                continue;
            }
            let e = self.loss.derivatives(y[j], u[j]);
            value += e.value;
            d1[j] = e.d1;
            d2[j] = e.d2;
        }
        let mut grad = self.dataset.features().tr_mul(&d1);
        self.regularizer.grad_into(beta, &mut grad, self.lambda);
        value += self.lambda * self.regularizer.value(beta);
        (value, grad, d2)
    }

    /// Dense `G(β)` given per-sample curvatures.
    pub(crate) fn dense_hessian(&self, beta: &DVector<f64>, d2: &DVector<f64>) -> Result<DMatrix<f64>> {
        let x = self.dataset.features();
        let mut scaled = x.clone();
        for (j, mut row) in scaled.row_iter_mut().enumerate() {
            row *= d2[j].sqrt();
        }
        let mut g = scaled.tr_mul(&scaled);
        let reg = self.regularizer.hess_diag(beta)?;
        for k in 0..self.p() {
            g[(k, k)] += self.lambda * reg[k];
        }
        Ok(g)
    }

    /// Per-sample `(ℓⱼ, ℓ̇ⱼ, ℓ̈ⱼ)` at `β`.
    pub fn sample_derivatives(&self, beta: &DVector<f64>) -> Vec<LossEval> {
        let u = self.predictors(beta);
        let y = self.dataset.responses();
        (0..self.n()).map(|j| self.loss.derivatives(y[j], u[j])).collect()
    }
}

/// Objective value, gradient and Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Evaluates `L(β)`, `∇L(β)` and `G(β)`.
pub fn objective_eval(spec: &ObjectiveSpec, beta: &DVector<f64>) -> Result<ObjectiveEval> {
    spec.check_beta(beta)?;
    let (value, grad, d2) = spec.first_order_excluding(beta, None);
    let hessian = spec.dense_hessian(beta, &d2)?;
    Ok(ObjectiveEval { value, grad, hessian })
}
