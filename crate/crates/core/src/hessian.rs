//! Symmetric positive-definite factorization of `G = Xᵀ diag(w) X + Λ`.
//!
//! Two exact representations are used, whichever has the smaller system:
//!
//! * primal: Cholesky of the `p × p` matrix `G` itself;
//! * dual: with `S = diag(√w)` and `K = X Λ⁻¹ Xᵀ`, Cholesky of the `n × n`
//!   matrix `M = I + S K S`, applied through
//!   `G⁻¹ = Λ⁻¹ − Λ⁻¹ Xᵀ S M⁻¹ S X Λ⁻¹`.
//!
//! Both give the action of `G⁻¹` to working precision; the dual form is what
//! keeps exact leave-one-out refits affordable when `p > n`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::glm::ObjectiveSpec;

enum Repr<'a> {
    Primal(Cholesky<f64, Dyn>),
    Dual {
        features: &'a DMatrix<f64>,
        lambda_inv: DVector<f64>,
        sqrt_w: DVector<f64>,
        chol: Cholesky<f64, Dyn>,
    },
}

/// Factorized Hessian supporting repeated solves `G⁻¹v`.
pub struct HessianFactor<'a> {
    repr: Repr<'a>,
    dim: usize,
}

impl std::fmt::Debug for HessianFactor<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.repr {
            Repr::Primal(_) => "primal",
            Repr::Dual { .. } => "dual",
        };
        f.debug_struct("HessianFactor")
            .field("dim", &self.dim)
            .field("kind", &kind)
            .finish()
    }
}

fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    m.cholesky()
        .ok_or_else(|| Error::SingularHessian(format!("{what} is not numerically positive definite")))
}

impl<'a> HessianFactor<'a> {
    /// Factorizes an arbitrary dense SPD matrix.
    pub fn from_dense(g: DMatrix<f64>) -> Result<HessianFactor<'static>> {
        if !g.is_square() || g.nrows() == 0 {
            return Err(Error::invalid("Hessian must be a non-empty square matrix"));
        }
        let dim = g.nrows();
        Ok(HessianFactor {
            repr: Repr::Primal(cholesky(g, "Hessian")?),
            dim,
        })
    }

    /// Factorizes `G(β)` for `spec`, with training point `skip` removed.
    pub fn build(spec: &'a ObjectiveSpec, beta: &DVector<f64>, skip: Option<usize>) -> Result<Self> {
        spec.require_positive_lambda()?;
        let (_, _, d2) = spec.first_order_excluding(beta, skip);
        Self::with_curvatures(spec, beta, &d2)
    }

    /// Factorizes `Σⱼ xⱼxⱼᵀ wⱼ + λ∇²r(β)` for given sample curvatures `wⱼ ≥ 0`.
    pub(crate) fn with_curvatures(
        spec: &'a ObjectiveSpec,
        beta: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<Self> {
        let (n, p) = (spec.n(), spec.p());
        if n >= p {
            let g = spec.dense_hessian(beta, w)?;
            return Ok(Self {
                repr: Repr::Primal(cholesky(g, "Hessian")?),
                dim: p,
            });
        }

        let x = spec.dataset().features();
        let penalty = spec.regularizer().hess_diag(beta)? * spec.lambda();
        if penalty.iter().any(|&v| v.is_nan() || v <= 0.0) {
            return Err(Error::SingularHessian(
                "penalty curvature underflowed to zero".into(),
            ));
        }
        let lambda_inv = penalty.map(|v| 1.0 / v);
        let sqrt_w = w.map(f64::sqrt);

        let mut m = match spec.regularizer().constant_curvature() {
            Some(c) => spec.gram() / (spec.lambda() * c),
            None => {
                let mut scaled = x.clone();
                for (k, mut col) in scaled.column_iter_mut().enumerate() {
                    col *= lambda_inv[k];
                }
                scaled * x.transpose()
            }
        };
        for j in 0..n {
            for i in 0..n {
                m[(i, j)] *= sqrt_w[i] * sqrt_w[j];
            }
            m[(j, j)] += 1.0;
        }
        Ok(Self {
            repr: Repr::Dual {
                features: x,
                lambda_inv,
                sqrt_w,
                chol: cholesky(m, "dual Hessian system")?,
            },
            dim: p,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `G⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.dim, "solve: vector length mismatch");
        match &self.repr {
            Repr::Primal(chol) => chol.solve(v),
            Repr::Dual {
                features,
                lambda_inv,
                sqrt_w,
                chol,
            } => {
                let scaled = v.component_mul(lambda_inv);
                let mut t = (*features * &scaled).component_mul(sqrt_w);
                chol.solve_mut(&mut t);
                let t = t.component_mul(sqrt_w);
                let back = features.tr_mul(&t).component_mul(lambda_inv);
                scaled - back
            }
        }
    }

    /// `G⁻¹ B` for a `p × k` right-hand side.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.dim, "solve_matrix: row count mismatch");
        match &self.repr {
            Repr::Primal(chol) => chol.solve(b),
            Repr::Dual {
                features,
                lambda_inv,
                sqrt_w,
                chol,
            } => {
                let mut scaled = b.clone();
                for mut col in scaled.column_iter_mut() {
                    col.component_mul_assign(lambda_inv);
                }
                let mut t = *features * &scaled;
                for mut col in t.column_iter_mut() {
                    col.component_mul_assign(sqrt_w);
                }
                chol.solve_mut(&mut t);
                for mut col in t.column_iter_mut() {
                    col.component_mul_assign(sqrt_w);
                }
                let mut back = features.tr_mul(&t);
                for mut col in back.column_iter_mut() {
                    col.component_mul_assign(lambda_inv);
                }
                scaled - back
            }
        }
    }

    /// Dense `G⁻¹`; for tests and small problems.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve_matrix(&DMatrix::identity(self.dim, self.dim))
    }
}
