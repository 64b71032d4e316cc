//! The item-level decision process: observation/action/transition types,
//! the reward and return formulas, feature normalization, and the
//! append-only transition log.

pub mod formulas;
pub mod log;
pub mod normalizer;
pub mod types;

pub use formulas::{discounted_return, reward, td_target, REWARD_EPSILON};
pub use normalizer::{assemble_observation, AssembledObs, Normalizer};
pub use types::{
    Action, Episode, InherentFeatures, ItemId, NominalState, Observation, Transition,
    TrendFactors, DEFAULT_CONTENT_DIM, NOMINAL_DIM, NUMERIC_DIM, TREND_DIM, TREND_METRICS,
    TREND_SOURCES,
};
