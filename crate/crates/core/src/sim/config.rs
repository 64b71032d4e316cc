//! Simulator configuration with desk-scale defaults. Every knob can be
//! overridden from a key-value config file under the `sim.` prefix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kvfile::KvConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Id-space sizes; must stay within the network's table sizes.
    pub n_categories: usize,
    pub n_brands: usize,
    pub n_shops: usize,
    pub content_dim: usize,
    /// Fraction of spawned items whose quality lands above the threshold.
    pub high_potential_frac: f64,
    pub quality_threshold: f64,
    /// Noise added to the quality-aligned content displacement.
    pub content_noise: f64,
    /// Click model.
    pub ctr_cap: f64,
    pub ctr_prior: f64,
    pub shrinkage_kappa: f64,
    /// Conversion model.
    pub cvr_base: f64,
    pub price_elasticity: f64,
    /// Life-stage curve.
    pub ramp_mid: f64,
    pub ramp_width: f64,
    pub mature_day: f64,
    /// Organic (non-recommendation) traffic and its feedback coupling.
    pub organic_base: f64,
    pub feedback_coef: f64,
    /// Exogenous trend processes.
    pub trend_sigma: f64,
    pub campaign_amp: f64,
    pub campaign_period: f64,
    /// Impression allocation.
    pub alloc_temperature: f64,
    /// Smoothing factor for the crowd summary statistics.
    pub crowd_decay: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            n_categories: 8,
            n_brands: 24,
            n_shops: 40,
            content_dim: 16,
            high_potential_frac: 0.2,
            quality_threshold: 0.6,
            content_noise: 0.15,
            ctr_cap: 0.35,
            ctr_prior: 0.06,
            shrinkage_kappa: 300.0,
            cvr_base: 0.18,
            price_elasticity: 1.5,
            ramp_mid: 6.0,
            ramp_width: 2.0,
            mature_day: 30.0,
            organic_base: 12.0,
            feedback_coef: 0.35,
            trend_sigma: 0.02,
            campaign_amp: 0.15,
            campaign_period: 14.0,
            alloc_temperature: 0.05,
            crowd_decay: 0.8,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_categories == 0 || self.n_brands == 0 || self.n_shops == 0 {
            return Err(Error::config("sim: id spaces must be non-empty"));
        }
        if self.content_dim == 0 {
            return Err(Error::config("sim: content_dim must be positive"));
        }
        if !(0.0..=1.0).contains(&self.high_potential_frac) {
            return Err(Error::config("sim: high_potential_frac must be in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.quality_threshold) || self.quality_threshold < 0.2 {
            return Err(Error::config("sim: quality_threshold must be in [0.2, 1)"));
        }
        if !(self.ctr_cap > 0.0 && self.ctr_cap < 1.0) {
            return Err(Error::config("sim: ctr_cap must be in (0, 1)"));
        }
        if !(self.ctr_prior > 0.0 && self.ctr_prior < 1.0) {
            return Err(Error::config("sim: ctr_prior must be in (0, 1)"));
        }
        if self.shrinkage_kappa <= 0.0 {
            return Err(Error::config("sim: shrinkage_kappa must be positive"));
        }
        if self.ramp_width <= 0.0 {
            return Err(Error::config("sim: ramp_width must be positive"));
        }
        if self.organic_base < 0.0 || self.feedback_coef < 0.0 {
            return Err(Error::config("sim: organic terms must be non-negative"));
        }
        if self.trend_sigma < 0.0 || self.campaign_period <= 0.0 {
            return Err(Error::config("sim: invalid trend parameters"));
        }
        if self.alloc_temperature <= 0.0 {
            return Err(Error::config("sim: alloc_temperature must be positive"));
        }
        if !(0.0..1.0).contains(&self.crowd_decay) {
            return Err(Error::config("sim: crowd_decay must be in [0, 1)"));
        }
        Ok(())
    }

    /// Overlay values from a key-value config (keys `sim.<field>`).
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut cfg = SimConfig::default();
        macro_rules! pull {
            (u64 $field:ident) => {
                if let Some(v) = kv.get_u64(concat!("sim.", stringify!($field)))? {
                    cfg.$field = v;
                }
            };
            (usize $field:ident) => {
                if let Some(v) = kv.get_usize(concat!("sim.", stringify!($field)))? {
                    cfg.$field = v;
                }
            };
            (f64 $field:ident) => {
                if let Some(v) = kv.get_f64(concat!("sim.", stringify!($field)))? {
                    cfg.$field = v;
                }
            };
        }
        pull!(u64 seed);
        pull!(usize n_categories);
        pull!(usize n_brands);
        pull!(usize n_shops);
        pull!(usize content_dim);
        pull!(f64 high_potential_frac);
        pull!(f64 quality_threshold);
        pull!(f64 content_noise);
        pull!(f64 ctr_cap);
        pull!(f64 ctr_prior);
        pull!(f64 shrinkage_kappa);
        pull!(f64 cvr_base);
        pull!(f64 price_elasticity);
        pull!(f64 ramp_mid);
        pull!(f64 ramp_width);
        pull!(f64 mature_day);
        pull!(f64 organic_base);
        pull!(f64 feedback_coef);
        pull!(f64 trend_sigma);
        pull!(f64 campaign_amp);
        pull!(f64 campaign_period);
        pull!(f64 alloc_temperature);
        pull!(f64 crowd_decay);
        cfg.validate()?;
        Ok(cfg)
    }
}
