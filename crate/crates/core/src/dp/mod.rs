//! Laplace noise, calibration, and privacy-budget composition.

mod accounting;
mod laplace;
mod rng;

pub use accounting::{
    compose_advanced, compose_simple, floor_budget, pipeline_budget, pipeline_budget_advanced,
    pipeline_ledger, MechanismRecord, PrivacyBudget, PrivacyLedger,
};
pub use laplace::{laplace_mechanism, sample_laplace, sigmoid_encoder_sensitivity, LaplaceNoise};
pub use rng::{NoiseRng, RngMode};

pub(crate) use laplace::check_epsilon;
