//! Synthetic logistic-ridge experiments comparing influence estimators with
//! the exact leave-one-out influence.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::glm::{sigmoid, Dataset, Loss, ObjectiveSpec, Regularizer, RidgeConvention};
use crate::hessian::HessianFactor;
use crate::influence::{loo_betas, HatDiagnostics, InfluenceEngine, InfluenceRecord};
use crate::solver::{newton_fit, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Estimator {
    True,
    If,
    CorrectedIf,
    New,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::True,
        Estimator::If,
        Estimator::CorrectedIf,
        Estimator::New,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::True => "true",
            Estimator::If => "if",
            Estimator::CorrectedIf => "corrected_if",
            Estimator::New => "new",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown estimator '{s}'")))
    }
}

/// Parameters of one synthetic experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: usize,
    pub lambda: f64,
    /// Number of test points.
    pub m: usize,
    pub seed: u64,
    pub loss: Loss,
    pub estimators: BTreeSet<Estimator>,
    pub ridge_convention: RidgeConvention,
    /// Independent data draws pooled into one table row.
    pub replicates: usize,
    pub solver: SolverConfig,
}

impl ExperimentConfig {
    pub fn new(n: usize, p: usize, lambda: f64, m: usize, seed: u64) -> Self {
        Self {
            n,
            p,
            lambda,
            m,
            seed,
            loss: Loss::Logistic,
            estimators: Estimator::ALL.into_iter().collect(),
            ridge_convention: RidgeConvention::default(),
            replicates: 1,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.m == 0 {
            return Err(Error::invalid(format!(
                "n, p and m must be positive, got n = {}, p = {}, m = {}",
                self.n, self.p, self.m
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be at least 1"));
        }
        Ok(())
    }

    pub fn objective(&self, train: Dataset) -> Result<ObjectiveSpec> {
        ObjectiveSpec::new(
            train,
            self.loss,
            Regularizer::Ridge(self.ridge_convention),
            self.lambda,
        )
    }
}

/// Independent random streams, one per labelled purpose.
///
/// Each label maps to a fixed ChaCha20 stream id under the same key, so the
/// variates drawn for one purpose never depend on what else was drawn.
#[derive(Debug, Clone)]
pub struct StreamRng {
    seed: u64,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// FNV-1a hash of the label and replicate index.
    fn stream_id(label: &str, replicate: usize) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes().chain((replicate as u64).to_le_bytes()) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    pub fn stream(&self, label: &str, replicate: usize) -> Stream {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(Self::stream_id(label, replicate));
        Stream { rng }
    }
}

pub struct Stream {
    rng: ChaCha20Rng,
}

impl Stream {
    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    /// Standard normal by inversion of the normal CDF.
    pub fn normal(&mut self) -> f64 {
        let u = self.uniform();
        Normal::standard().inverse_cdf(u)
    }
}

/// Synthetic training and test data drawn from the logistic model.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub train: Dataset,
    pub test: Dataset,
    pub beta_star: DVector<f64>,
}

fn draw_features(stream: &mut Stream, rows: usize, p: usize, sd: f64) -> DMatrix<f64> {
    let row_major: Vec<f64> = (0..rows * p).map(|_| sd * stream.normal()).collect();
    DMatrix::from_row_slice(rows, p, &row_major)
}

fn draw_responses(
    stream: &mut Stream,
    x: &DMatrix<f64>,
    beta_star: &DVector<f64>,
    loss: Loss,
) -> DVector<f64> {
    let u = x * beta_star;
    match loss {
        Loss::Logistic => u.map(|v| if stream.uniform() < sigmoid(v) { 1.0 } else { 0.0 }),
        Loss::Squared => u.map(|v| v + stream.normal()),
    }
}

/// Draws `β* ~ N(0, I)`, features `~ N(0, I/n)` and Bernoulli(σ(xᵀβ*)) labels
/// (Gaussian noise around `xᵀβ*` for squared loss).
pub fn generate_synthetic(config: &ExperimentConfig) -> Result<SyntheticInstance> {
    generate_replicate(config, 0)
}

pub fn generate_replicate(config: &ExperimentConfig, replicate: usize) -> Result<SyntheticInstance> {
    config.validate()?;
    let rng = StreamRng::new(config.seed);
    let sd = 1.0 / (config.n as f64).sqrt();
    let mut s = rng.stream("beta_star", replicate);
    let beta_star = DVector::from_fn(config.p, |_, _| s.normal());
    let train_x = draw_features(&mut rng.stream("train_x", replicate), config.n, config.p, sd);
    let train_y = draw_responses(
        &mut rng.stream("train_y", replicate),
        &train_x,
        &beta_star,
        config.loss,
    );
    let test_x = draw_features(&mut rng.stream("test_x", replicate), config.m, config.p, sd);
    let test_y = draw_responses(
        &mut rng.stream("test_y", replicate),
        &test_x,
        &beta_star,
        config.loss,
    );
    Ok(SyntheticInstance {
        train: Dataset::new(train_x, train_y)?,
        test: Dataset::new(test_x, test_y)?,
        beta_star,
    })
}

/// Kendall's tau-a: `(C − D) / (n(n−1)/2)`; tied pairs count as neither.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "kendall_tau: lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("kendall_tau needs at least two observations"));
    }
    let mut score: i64 = 0;
    for j in 0..n {
        for k in j + 1..n {
            let s = (a[j] - a[k]) * (b[j] - b[k]);
            if s > 0.0 {
                score += 1;
            } else if s < 0.0 {
                score -= 1;
            }
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}

/// `(Σ Hᵢᵢ, Σ Hᵢᵢ / p)`.
pub fn effective_df(diag: &HatDiagnostics, p: usize) -> (f64, f64) {
    let df = diag.h.sum();
    (df, df / p as f64)
}

/// Summary of one configuration: mean and standard deviation over test points
/// of Kendall's τ between each estimator and the exact influence.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub n: usize,
    pub p: usize,
    pub lambda: f64,
    pub df_ratio: f64,
    pub tau_new_mean: Option<f64>,
    pub tau_new_std: Option<f64>,
    pub tau_if_mean: Option<f64>,
    pub tau_if_std: Option<f64>,
    pub tau_corrected_mean: Option<f64>,
    pub tau_corrected_std: Option<f64>,
}

/// Mean and sample standard deviation (zero for a single value).
fn mean_std(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt())
}

/// A fitted model together with its influence state.
#[derive(Debug, Clone)]
pub struct FittedInstance {
    pub instance: SyntheticInstance,
    pub spec: ObjectiveSpec,
    pub beta_hat: DVector<f64>,
    pub engine: InfluenceEngine,
}

/// Draws replicate `replicate`, fits it and prepares the influence engine.
pub fn fit_replicate(config: &ExperimentConfig, replicate: usize) -> Result<FittedInstance> {
    let instance = generate_replicate(config, replicate)?;
    let spec = config.objective(instance.train.clone())?;
    let fit = newton_fit(&spec, &DVector::zeros(config.p), &config.solver)?;
    if !fit.converged {
        return Err(Error::SingularHessian(format!(
            "full-data fit did not converge (gradient norm {:.3e} after {} iterations)",
            fit.grad_norm, fit.iterations
        )));
    }
    let factor = HessianFactor::build(&spec, &fit.beta, None)?;
    let engine = InfluenceEngine::new(&spec, &fit.beta, &factor)?;
    drop(factor);
    Ok(FittedInstance {
        instance,
        beta_hat: fit.beta,
        spec,
        engine,
    })
}

/// Output of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<TableRow>,
    /// Records of every replicate, in replicate order.
    pub records: Vec<InfluenceRecord>,
    /// Per-test-point τ values, pooled over replicates, for each estimator.
    pub taus: Vec<(Estimator, Vec<f64>)>,
}

/// Per test point τ across training points between `pick(record)` and the
/// exact influence. `records` must be training-major for one replicate.
pub fn per_test_tau(
    records: &[InfluenceRecord],
    n: usize,
    m: usize,
    pick: impl Fn(&InfluenceRecord) -> f64,
) -> Result<Vec<f64>> {
    if records.len() != n * m {
        return Err(Error::invalid(format!(
            "expected {} records, got {}",
            n * m,
            records.len()
        )));
    }
    (0..m)
        .map(|t| {
            let mut truth = Vec::with_capacity(n);
            let mut est = Vec::with_capacity(n);
            for i in 0..n {
                let r = &records[i * m + t];
                truth.push(
                    r.i_true.ok_or_else(|| {
                        Error::invalid("exact influence is required to compute Kendall's tau")
                    })?,
                );
                est.push(pick(r));
            }
            kendall_tau(&est, &truth)
        })
        .collect()
}

/// Fits the model, evaluates all estimators on every (training, test) pair
/// and summarises rank agreement with the exact influence.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let want_true = config.estimators.contains(&Estimator::True);
    let compared: Vec<Estimator> = config
        .estimators
        .iter()
        .copied()
        .filter(|&e| e != Estimator::True)
        .collect();
    if !want_true && !compared.is_empty() {
        return Err(Error::invalid(
            "Kendall's tau needs the exact influence; add 'true' to the estimators",
        ));
    }

    let mut records = Vec::new();
    let mut taus: Vec<(Estimator, Vec<f64>)> = compared.iter().map(|&e| (e, Vec::new())).collect();
    let mut df_ratios = Vec::with_capacity(config.replicates);

    for replicate in 0..config.replicates {
        let fitted = fit_replicate(config, replicate)?;
        df_ratios.push(fitted.engine.hat().df_ratio);
        let loo = if want_true {
            Some(loo_betas(&fitted.spec, &fitted.beta_hat, &config.solver)?)
        } else {
            None
        };
        let recs = fitted.engine.evaluate(&fitted.instance.test, loo.as_ref())?;
        for (est, values) in taus.iter_mut() {
            let pick: fn(&InfluenceRecord) -> f64 = match est {
                Estimator::If => |r| r.i_if,
                Estimator::CorrectedIf => |r| r.i_if_corrected,
                Estimator::New => |r| r.i_new,
                Estimator::True => unreachable!(),
            };
            values.extend(per_test_tau(&recs, config.n, config.m, pick)?);
        }
        records.extend(recs);
    }

    let summary = |e: Estimator| taus.iter().find(|(est, _)| *est == e).map(|(_, v)| mean_std(v));
    let (new, iff, corrected) = (
        summary(Estimator::New),
        summary(Estimator::If),
        summary(Estimator::CorrectedIf),
    );
    let row = TableRow {
        n: config.n,
        p: config.p,
        lambda: config.lambda,
        df_ratio: mean_std(&df_ratios).0,
        tau_new_mean: new.map(|s| s.0),
        tau_new_std: new.map(|s| s.1),
        tau_if_mean: iff.map(|s| s.0),
        tau_if_std: iff.map(|s| s.1),
        tau_corrected_mean: corrected.map(|s| s.0),
        tau_corrected_std: corrected.map(|s| s.1),
    };
    Ok(ExperimentOutput {
        rows: vec![row],
        records,
        taus,
    })
}

/// Named grids of table rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TablePreset {
    /// λ = 0.01 at n/p = 0.5.
    PaperTable1,
    /// λ = 10 at n/p = 0.5.
    PaperTable2,
}

impl TablePreset {
    pub fn lambda(self) -> f64 {
        match self {
            TablePreset::PaperTable1 => 0.01,
            TablePreset::PaperTable2 => 10.0,
        }
    }

    /// `(n, p)` rows.
    pub fn grid(self) -> [(usize, usize); 3] {
        [(250, 500), (500, 1000), (1000, 2000)]
    }

    pub fn configs(self, m: usize, seed: u64) -> Vec<ExperimentConfig> {
        self.grid()
            .into_iter()
            .map(|(n, p)| ExperimentConfig::new(n, p, self.lambda(), m, seed))
            .collect()
    }
}

impl FromStr for TablePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-table-1" => Ok(TablePreset::PaperTable1),
            "paper-table-2" => Ok(TablePreset::PaperTable2),
            _ => Err(Error::invalid(format!("unknown preset '{s}'"))),
        }
    }
}
