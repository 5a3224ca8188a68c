//! Test-only helpers: random instances and dense reference computations that
//! do not go through the library's solver or factorization code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use newfluence::{Dataset, Loss, ObjectiveSpec, Regularizer, RidgeConvention};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct TestRng(ChaCha8Rng);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }

    /// Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn matrix(&mut self, rows: usize, cols: usize, sd: f64) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| sd * self.normal())
    }

    pub fn vector(&mut self, len: usize, sd: f64) -> DVector<f64> {
        DVector::from_fn(len, |_, _| sd * self.normal())
    }
}

pub fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Reference loss derivatives, written out directly.
pub fn ref_d1(loss: Loss, y: f64, u: f64) -> f64 {
    match loss {
        Loss::Squared => u - y,
        Loss::Logistic => sigmoid(u) - y,
    }
}

pub fn ref_d2(loss: Loss, _y: f64, u: f64) -> f64 {
    match loss {
        Loss::Squared => 1.0,
        Loss::Logistic => sigmoid(u) * (1.0 - sigmoid(u)),
    }
}

pub fn ref_loss(loss: Loss, y: f64, u: f64) -> f64 {
    match loss {
        Loss::Squared => 0.5 * (y - u).powi(2),
        Loss::Logistic => (1.0 + u.exp()).ln() - y * u,
    }
}

/// Random instance with features ~ N(0, 1/n) and labels from a logistic model
/// (or Gaussian responses for squared loss).
pub fn random_spec(
    rng: &mut TestRng,
    n: usize,
    p: usize,
    loss: Loss,
    conv: RidgeConvention,
    lambda: f64,
) -> ObjectiveSpec {
    let x = rng.matrix(n, p, 1.0 / (n as f64).sqrt());
    let beta = rng.vector(p, 1.0);
    let u = &x * &beta;
    let y = u.map(|v| match loss {
        Loss::Logistic => {
            if rng.uniform() < sigmoid(v) {
                1.0
            } else {
                0.0
            }
        }
        Loss::Squared => v + rng.normal(),
    });
    ObjectiveSpec::new(
        Dataset::new(x, y).unwrap(),
        loss,
        Regularizer::Ridge(conv),
        lambda,
    )
    .unwrap()
}

pub fn ridge_curvature(spec: &ObjectiveSpec) -> f64 {
    match spec.regularizer() {
        Regularizer::Ridge(c) => c.curvature(),
        _ => panic!("ridge expected"),
    }
}

/// Dense `Σⱼ≠skip xⱼxⱼᵀ ℓ̈ⱼ + λ c I` built row by row.
pub fn dense_hessian(spec: &ObjectiveSpec, beta: &DVector<f64>, skip: Option<usize>) -> DMatrix<f64> {
    let (n, p) = (spec.n(), spec.p());
    let x = spec.dataset().features();
    let y = spec.dataset().responses();
    let mut g = DMatrix::identity(p, p) * (spec.lambda() * ridge_curvature(spec));
    for j in 0..n {
        if Some(j) == skip {
            continue;
        }
        let xj = x.row(j).transpose();
        let w = ref_d2(spec.loss(), y[j], xj.dot(beta));
        g += &xj * xj.transpose() * w;
    }
    g
}

pub fn dense_inverse(g: &DMatrix<f64>) -> DMatrix<f64> {
    g.clone().try_inverse().expect("invertible")
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Least-squares slope of `y` on `x` with an intercept.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
