//! Itemwise episodic training with interactive exploration: a repeating
//! two-phase loop that first rolls the live policy through the simulated
//! market to collect per-item episodes, then replays sampled episodes in
//! lockstep, carrying bootstrapped recurrent states forward step by step
//! while updating critic and actor with depth-one truncated backprop and
//! softly tracking target copies of every parameter.

pub mod agent;
pub mod buffer;
pub mod config;
pub mod generate;
pub mod session;
pub mod update;

pub use agent::Agent;
pub use buffer::ReplayBuffer;
pub use config::TrainerConfig;
pub use generate::{generate_transitions, GenerationOut, SpawnEvent};
pub use session::{SessionRecord, SessionRunner};
pub use update::{trunk_state, update_epoch, EpochStats};
