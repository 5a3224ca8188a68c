//! Leave-one-out influence for regularized generalized linear models.
//!
//! Given a ridge-type fit `β̂ = argmin Σⱼ ℓ(yⱼ, xⱼᵀβ) + λ r(β)`, this crate
//! computes, for every training point `i` and test point `z₀`, the exact
//! leave-one-out change in test loss together with three approximations of
//! it: the classical influence function, its leverage-corrected variant and
//! Newfluence (a single Newton step on the leave-one-out objective).
//!
//! The [`experiment`] module reproduces synthetic logistic-ridge comparisons
//! of these estimators, and the `newfluence` binary exposes them on the
//! command line.

pub mod cli;
pub mod error;
pub mod experiment;
pub mod glm;
pub mod hessian;
pub mod influence;
pub mod io;
pub mod solver;

pub use error::{Error, Result};
pub use experiment::{
    effective_df, generate_synthetic, kendall_tau, run_experiment, Estimator, ExperimentConfig,
    SyntheticInstance, TablePreset, TableRow,
};
pub use glm::{
    loss_eval, objective_eval, reg_eval, Dataset, Loss, ObjectiveSpec, Regularizer, RidgeConvention,
};
pub use hessian::HessianFactor;
pub use influence::{
    classical_if, corrected_if, hat_diagonal, newfluence, newton_loo_beta, true_influence, woodbury_downdate,
    HatDiagnostics, InfluenceEngine, InfluenceRecord, TestPoint,
};
pub use solver::{loo_refit, newton_fit, FitResult, SolverConfig, Tolerance};
