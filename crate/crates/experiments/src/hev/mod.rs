//! Hybrid-electric-vehicle energy management under speed predictors.

pub mod cycle;
pub mod experiment;
pub mod model;

pub use cycle::DrivingCycle;
pub use experiment::{
    default_matrix, hev_audits, hev_experiment, hev_posterior_cost, run_predictor, HevAudit, HevConfig,
    HevExperiment, HevRun, PredictorEntry, PredictorKind, MATRIX_SIGMAS,
};
pub use model::{cost_breakdown, hev_step, CostBreakdown, EfficiencyConvention, HevParams, HevStep};
