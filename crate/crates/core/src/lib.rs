//! Default-contagion credit portfolio models: a finite-pool Monte Carlo
//! simulator and several solvers for the large-pool limit (moment closure,
//! finite differences, Picard fixed point), plus loss statistics.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod deterministic;
pub mod error;
pub mod finite;
pub mod fixed_point;
pub mod mesh;
pub mod model;
pub mod moments;
pub mod real;
pub mod risk;
pub mod rng;
pub mod spde;
pub mod stats;

mod parallel;

pub use deterministic::{
    analytic_no_feedback_loss, solve_pde_predictor_corrector, DensitySolution, PredictorCorrectorSolution,
    RiccatiCoefficients,
};
pub use error::{Error, Result};
pub use finite::{run_finite_experiment, simulate_trial, FiniteSystem, LgdSpec, TrialLossPath};
pub use fixed_point::{
    simulate_fixed_point_loss, solve_fixed_point, ContagionRate, FixedPointConfig, FixedPointSolution,
};
pub use mesh::Mesh;
pub use model::{
    validate_pool, NameParams, PoolEntry, PoolSpec, RiskKind, SimConfig, SystematicRiskModel, TimeGrid,
    ValidationReport, Violation, DEFAULT_CAP,
};
pub use moments::{
    moment_drift_diff, simulate_limiting_loss, solve_moment_path, step_moments, HeterogeneousMomentState, MomentPath,
    MomentState, MomentVariant,
};
pub use real::Real;
pub use risk::{simulate_risk_path, trial_risk_path, RiskPath};
pub use rng::{derive_stream, Purpose, RngStream, StreamId};
pub use spde::{
    cost_ratio_estimate, simulate_spde_loss, solve_spde_explicit, stability_threshold, SpdeFdConfig, SpdeSolution,
};
pub use stats::{
    bootstrap_var_standard_error, histogram, ks_distance, mean_and_standard_error, midranks, spearman,
    spearman_standard_error, var_at_level, EmpiricalDistribution, Histogram, LossSamples,
};

pub type Params = model::NameParams<f64>;
pub type Pool = model::PoolSpec<f64>;
pub type RiskModel = model::SystematicRiskModel<f64>;
pub type Grid = model::TimeGrid<f64>;
pub type Path = risk::RiskPath<f64>;
pub type Samples = stats::LossSamples<f64>;
pub type Distribution = stats::EmpiricalDistribution<f64>;
pub type Moments = moments::MomentState<f64>;
pub type IntensityMesh = mesh::Mesh<f64>;
pub type Lgd = finite::LgdSpec<f64>;
