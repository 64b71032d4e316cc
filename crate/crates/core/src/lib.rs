//! Lifetime-value reinforcement learning for cold-start item ranking.
//!
//! A desk-scale lab for an item-level recommendation agent: a synthetic
//! e-commerce market with item life-stage dynamics, a recurrent
//! actor-critic trained by itemwise episodic deterministic policy
//! gradient, a dual-rank score mixer that blends the policy score with a
//! conventional CTR score, and an offline evaluation harness (regression
//! and ranking metrics, baselines, ablations, sensitivity sweeps).
//!
//! Everything is deterministic given `(config, seed)`: per-item randomness
//! comes from counter-based RNG streams, and all parallel reductions run
//! in a fixed order, so parallel and sequential builds produce
//! bit-identical artifacts.

pub mod actor;
pub mod critic;
pub mod error;
pub mod eval;
pub mod exec;
pub mod experiment;
pub mod kvfile;
pub mod mdp;
pub mod nn;
pub mod rank;
pub mod serde_util;
pub mod sim;
pub mod streams;
pub mod trainer;
pub mod trunk;

pub use error::{Error, Result};
