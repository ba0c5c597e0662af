//! Variance, power and sample-size calculations for split-plot factorial
//! longitudinal cluster randomised trials with continuous outcomes.
//!
//! The design randomises one intervention at the cluster level over a
//! sequence of periods (stepped wedge, parallel, crossover, or any custom
//! layout) and a second intervention at the individual level within every
//! cluster-period. This crate provides:
//!
//! - closed-form variances for the cluster-level, individual-level and
//!   interaction effect estimators, under models with and without the
//!   interaction term, for constant or per-cell sample sizes
//!   ([`variance`]);
//! - power, detectable effect size, and required-sample-size solvers
//!   ([`power`]);
//! - a brute-force GLS oracle, a collapsed cell-mean formulation, and a
//!   seeded Monte-Carlo simulator that verify every closed form from first
//!   principles ([`oracle`], [`verify`]);
//! - a command-line front end (`splitplot-lcrt`) for one-off calculations,
//!   table and curve sweeps, and the verification suite ([`cli`]).

pub mod cli;
pub mod correlation;
pub mod design;
pub mod error;
pub mod norm;
pub mod oracle;
pub mod power;
pub mod variance;
pub mod verify;

pub use correlation::{CorrelationStructure, CovarianceCoefficients, VarianceComponents};
pub use design::{cell_plan, CellPlan, CellSizes, DesignFile, DesignSummary, TrialDesign};
pub use error::{Error, Result};
pub use power::{
    detectable_delta, power_for, required_cell_size, required_cluster_multiplier, PowerQuery,
    SolveFor,
};
pub use variance::{
    closed_form_variance, contrast_covariance, effect_variance, interaction_ratio_check, v_lcrt,
    v_lcrt_collapsed, ContrastCovariance, EffectQuery, Estimand, FormulaId, Model, VarianceResult,
};
