//! Dual-rank score mixing: y = (1-α)·y_ctr + α·y_rl with α driven by the
//! critic's Q through an exponential ramp between per-session Q bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixerConfig {
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Running 1st percentile of observed Q, refreshed per session.
    pub q_min: f64,
    /// Running 99th percentile of observed Q, refreshed per session.
    pub q_max: f64,
    /// Overrides the Q-driven ramp entirely; used by the sweep harness.
    pub fixed_alpha: Option<f64>,
}

impl MixerConfig {
    pub fn new(alpha_min: f64, alpha_max: f64, q_min: f64, q_max: f64) -> Result<Self> {
        let cfg = MixerConfig {
            alpha_min,
            alpha_max,
            q_min,
            q_max,
            fixed_alpha: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_fixed_alpha(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::config(format!("fixed alpha {alpha} outside [0,1]")));
        }
        Ok(MixerConfig {
            alpha_min: alpha,
            alpha_max: alpha,
            q_min: 0.0,
            q_max: 1.0,
            fixed_alpha: Some(alpha),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.alpha_min && self.alpha_min <= self.alpha_max && self.alpha_max < 1.0) {
            return Err(Error::config(format!(
                "alpha bounds ({}, {}) violate 0 <= min <= max < 1",
                self.alpha_min, self.alpha_max
            )));
        }
        if !(self.q_min < self.q_max) {
            return Err(Error::config(format!(
                "q bounds ({}, {}) require q_min < q_max",
                self.q_min, self.q_max
            )));
        }
        Ok(())
    }
}

/// α(q) = α_min + e^{u·ln(1+α_max−α_min)} − 1 with u = (q−Q_min)/(Q_max−Q_min).
///
/// q is clamped to the bounds first and the endpoints return α_min/α_max
/// identically, so outlier Q never escapes the declared range.
pub fn alpha(q: f64, cfg: &MixerConfig) -> Result<f64> {
    cfg.validate()?;
    if let Some(a) = cfg.fixed_alpha {
        return Ok(a);
    }
    if q.is_nan() {
        return Err(Error::numeric("alpha: q is NaN"));
    }
    if q <= cfg.q_min {
        return Ok(cfg.alpha_min);
    }
    if q >= cfg.q_max {
        return Ok(cfg.alpha_max);
    }
    let u = (q - cfg.q_min) / (cfg.q_max - cfg.q_min);
    let raw = (u * (1.0 + cfg.alpha_max - cfg.alpha_min).ln()).exp() - 1.0 + cfg.alpha_min;
    Ok(raw.clamp(cfg.alpha_min, cfg.alpha_max))
}

/// Final ranking score, Eq-style convex blend. All inputs in [0,1].
#[inline]
pub fn mix(y_ctr: f64, y_rl: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * y_ctr + alpha * y_rl
}

/// Convenience: α from q, then the blend.
pub fn final_score(y_ctr: f64, y_rl: f64, q: f64, cfg: &MixerConfig) -> Result<f64> {
    Ok(mix(y_ctr, y_rl, alpha(q, cfg)?))
}

/// 1st/99th percentile bounds from a sample of critic outputs, linear
/// interpolation between order statistics. A degenerate sample (all Q
/// equal) widens symmetrically so the mixer invariant q_min < q_max holds.
pub fn q_bounds_from_samples(qs: &[f64]) -> Result<(f64, f64)> {
    if qs.is_empty() {
        return Err(Error::usage("q bounds from empty sample"));
    }
    if qs.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("q bounds: non-finite sample"));
    }
    let mut sorted = qs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = percentile_sorted(&sorted, 1.0);
    let hi = percentile_sorted(&sorted, 99.0);
    if hi - lo < 1e-9 {
        let mid = 0.5 * (hi + lo);
        return Ok((mid - 0.5, mid + 0.5));
    }
    Ok((lo, hi))
}

pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let idx = (p / 100.0) * (sorted.len() - 1) as f64;
    let lo = idx.floor() as usize;
    let hi = idx.ceil() as usize;
    let frac = idx - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}
