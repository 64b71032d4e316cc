//! Item-lifecycle marketplace simulator: hidden quality latents, a
//! four-phase life-stage curve, exogenous demand trends, shrinkage ctr
//! scoring with its cold-start bias, budgeted impression allocation, and
//! binomial click/sale funnels with organic feedback.

pub mod config;
pub mod latent;
pub mod trend;
pub mod world;

pub use config::SimConfig;
pub use latent::{ctr_true, cvr_true, life_curve, spawn_cohort, ItemLatent};
pub use trend::{AggHistory, ScopeKey, TrendField};
pub use world::{
    allocate_impressions, ctr_estimate, organic_next, softmax_shares, DailyOutcome, DayResult,
    SimWorld, StepInput,
};
