//! Training hyperparameters with the published defaults.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kvfile::KvConfig;
use crate::trunk::AblationMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    /// Discount on the horizon of daily rewards.
    pub gamma: f64,
    /// Soft-update rate toward the target networks.
    pub tau: f64,
    /// Adam learning rate for both actor and critic groups.
    pub lr: f64,
    /// Blend-weight bounds handed to the dual-rank mixer.
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Replay capacity and per-update sample size, in episodes.
    pub buffer_capacity: usize,
    pub batch_episodes: usize,
    /// Update epochs per session.
    pub epochs_per_session: usize,
    /// Transitions per full-length episode; one session advances the
    /// world this many days plus one closing day to realize the final
    /// reward.
    pub episode_days: u32,
    /// Behavior-noise schedule (logit-space std), decayed per session.
    pub explore_sigma0: f64,
    pub explore_sigma_min: f64,
    pub explore_decay: f64,
    /// Global-norm gradient clip applied before each Adam step.
    pub clip_norm: f64,
    pub ablation: AblationMode,
    /// Serve full price everywhere (keeps arm comparisons unconfounded).
    pub freeze_price: bool,
    /// Seed for batch sampling and exploration streams.
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            gamma: 0.5,
            tau: 0.001,
            lr: 1e-4,
            alpha_min: 0.0,
            alpha_max: 0.2,
            buffer_capacity: 200,
            batch_episodes: 50,
            epochs_per_session: 4,
            episode_days: 5,
            explore_sigma0: 0.2,
            explore_sigma_min: 0.02,
            explore_decay: 0.8,
            clip_norm: 5.0,
            ablation: AblationMode::Full,
            freeze_price: true,
            seed: 1,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("trainer: gamma must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config("trainer: tau must be in [0, 1]"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config("trainer: lr must be finite and non-negative"));
        }
        if !(self.alpha_min >= 0.0 && self.alpha_max <= 1.0 && self.alpha_min <= self.alpha_max) {
            return Err(Error::config("trainer: need 0 <= alpha_min <= alpha_max <= 1"));
        }
        if self.buffer_capacity == 0 || self.batch_episodes == 0 {
            return Err(Error::config("trainer: buffer and batch must be positive"));
        }
        if self.episode_days == 0 {
            return Err(Error::config("trainer: episode_days must be positive"));
        }
        if self.explore_sigma0 < 0.0
            || self.explore_sigma_min < 0.0
            || self.explore_sigma_min > self.explore_sigma0
        {
            return Err(Error::config("trainer: invalid exploration schedule"));
        }
        if !(self.explore_decay > 0.0 && self.explore_decay <= 1.0) {
            return Err(Error::config("trainer: explore_decay must be in (0, 1]"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::config("trainer: clip_norm must be positive"));
        }
        Ok(())
    }

    /// Behavior-noise scale for a given session index.
    pub fn sigma_for_session(&self, session: u64) -> f64 {
        (self.explore_sigma0 * self.explore_decay.powi(session as i32))
            .max(self.explore_sigma_min)
    }

    /// Overlay values from a key-value config (keys `train.<field>`).
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut cfg = TrainerConfig::default();
        macro_rules! pull {
            (u64 $field:ident) => {
                if let Some(v) = kv.get_u64(concat!("train.", stringify!($field)))? {
                    cfg.$field = v;
                }
            };
            (u32 $field:ident) => {
                if let Some(v) = kv.get_u64(concat!("train.", stringify!($field)))? {
                    cfg.$field = v as u32;
                }
            };
            (usize $field:ident) => {
                if let Some(v) = kv.get_usize(concat!("train.", stringify!($field)))? {
                    cfg.$field = v;
                }
            };
            (f64 $field:ident) => {
                if let Some(v) = kv.get_f64(concat!("train.", stringify!($field)))? {
                    cfg.$field = v;
                }
            };
            (bool $field:ident) => {
                if let Some(v) = kv.get_bool(concat!("train.", stringify!($field)))? {
                    cfg.$field = v;
                }
            };
        }
        pull!(f64 gamma);
        pull!(f64 tau);
        pull!(f64 lr);
        pull!(f64 alpha_min);
        pull!(f64 alpha_max);
        pull!(usize buffer_capacity);
        pull!(usize batch_episodes);
        pull!(usize epochs_per_session);
        pull!(u32 episode_days);
        pull!(f64 explore_sigma0);
        pull!(f64 explore_sigma_min);
        pull!(f64 explore_decay);
        pull!(f64 clip_norm);
        pull!(bool freeze_price);
        pull!(u64 seed);
        if let Some(name) = kv.get_str("train.ablation") {
            cfg.ablation = AblationMode::parse(name)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_settings() {
        let cfg = TrainerConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.gamma, 0.5);
        assert_eq!(cfg.tau, 0.001);
        assert_eq!(cfg.lr, 1e-4);
        assert_eq!(cfg.alpha_min, 0.0);
        assert_eq!(cfg.alpha_max, 0.2);
        assert_eq!(cfg.buffer_capacity, 200);
        assert_eq!(cfg.batch_episodes, 50);
    }

    #[test]
    fn sigma_schedule_decays_to_floor() {
        let cfg = TrainerConfig::default();
        assert_eq!(cfg.sigma_for_session(0), 0.2);
        assert!(cfg.sigma_for_session(3) < 0.2);
        assert_eq!(cfg.sigma_for_session(500), cfg.explore_sigma_min);
    }

    #[test]
    fn kv_overlay() {
        let kv = KvConfig::from_str_content("train.gamma = 0.4\ntrain.ablation = no_r\n").unwrap();
        let cfg = TrainerConfig::from_kv(&kv).unwrap();
        assert_eq!(cfg.gamma, 0.4);
        assert_eq!(cfg.ablation, AblationMode::NoRecurrent);
        let bad = KvConfig::from_str_content("train.gamma = 1.5\n").unwrap();
        assert!(TrainerConfig::from_kv(&bad).is_err());
    }
}
