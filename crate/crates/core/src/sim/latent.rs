//! Hidden item ground truth: quality, life-stage curve, and cohort
//! spawning. Latents drive the world's click/sale draws but are never
//! serialized into an observation; the agent only ever sees their
//! consequences (and a noisy content embedding correlated with quality).

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::types::ItemId;
use crate::sim::config::SimConfig;
use crate::streams::{stream, Tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemLatent {
    pub quality: f64,
    pub appeal_decay: f64,
    pub intro_day: u32,
    pub category_id: u32,
    pub brand_id: u32,
    pub shop_id: u32,
    pub base_price: f64,
    pub content: Vec<f64>,
}

/// Life-stage multiplier at a given age: a logistic ramp (introduction
/// into growth) times an exponential tail after the maturity day
/// (decline). Continuous analogue of the four-phase product-life story.
pub fn life_curve(age_days: f64, cfg: &SimConfig, appeal_decay: f64) -> f64 {
    let rise = 1.0 / (1.0 + (-(age_days - cfg.ramp_mid) / cfg.ramp_width).exp());
    let fade = (-appeal_decay * (age_days - cfg.mature_day).max(0.0)).exp();
    rise * fade
}

/// True click-through probability for an item of the given latent at the
/// given age, scaled by the exogenous trend multiplier.
pub fn ctr_true(latent: &ItemLatent, age_days: f64, trend_mult: f64, cfg: &SimConfig) -> f64 {
    (cfg.ctr_cap * latent.quality * life_curve(age_days, cfg, latent.appeal_decay) * trend_mult)
        .clamp(0.0, 0.95)
}

/// True conversion probability given the price ratio; a deeper discount
/// (lower p) converts better.
pub fn cvr_true(latent: &ItemLatent, price_ratio: f64, cfg: &SimConfig) -> f64 {
    (cfg.cvr_base
        * (0.3 + 0.7 * latent.quality)
        * (1.0 + cfg.price_elasticity * (1.0 - price_ratio)))
    .clamp(0.0, 0.95)
}

/// Fixed per-category content centers and the quality direction, derived
/// from the world seed alone so every cohort shares the same geometry.
pub fn content_geometry(seed: u64, cfg: &SimConfig) -> (Vec<Vec<f64>>, Vec<f64>) {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let centers = (0..cfg.n_categories)
        .map(|k| {
            let mut rng = stream(seed, Tag::SpawnItem, &[u64::MAX, k as u64]);
            (0..cfg.content_dim)
                .map(|_| 0.5 * normal.sample(&mut rng))
                .collect()
        })
        .collect();
    let mut rng = stream(seed, Tag::SpawnItem, &[u64::MAX - 1, 0]);
    let mut dir: Vec<f64> = (0..cfg.content_dim)
        .map(|_| normal.sample(&mut rng))
        .collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    for v in dir.iter_mut() {
        *v /= norm;
    }
    (centers, dir)
}

/// Draw `n` fresh latents for a cohort introduced on `day`. A configured
/// fraction is high-potential: quality drawn above the threshold. The
/// content embedding is the category center plus a quality-aligned
/// displacement plus noise, so quality is recoverable (noisily) from
/// content alone.
pub fn spawn_cohort(
    n: usize,
    day: u32,
    first_id: u32,
    seed: u64,
    cfg: &SimConfig,
) -> Result<Vec<(ItemId, ItemLatent)>> {
    if n == 0 {
        return Err(Error::config("spawn_cohort: n must be positive"));
    }
    let (centers, dir) = content_geometry(seed, cfg);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut out = Vec::with_capacity(n);
    for slot in 0..n {
        let mut rng = stream(seed, Tag::SpawnItem, &[day as u64, slot as u64]);
        let category_id = rng.random_range(0..cfg.n_categories as u32);
        let brand_id = rng.random_range(0..cfg.n_brands as u32);
        let shop_id = rng.random_range(0..cfg.n_shops as u32);
        let high = rng.random_range(0.0..1.0) < cfg.high_potential_frac;
        let quality = if high {
            rng.random_range(cfg.quality_threshold..0.95)
        } else {
            rng.random_range(0.10..cfg.quality_threshold * 0.85)
        };
        let appeal_decay = rng.random_range(0.01..0.05);
        let base_price = rng.random_range(10.0..200.0);
        let content: Vec<f64> = (0..cfg.content_dim)
            .map(|j| {
                centers[category_id as usize][j]
                    + dir[j] * (quality - 0.5) * 2.0
                    + cfg.content_noise * normal.sample(&mut rng)
            })
            .collect();
        out.push((
            ItemId(first_id + slot as u32),
            ItemLatent {
                quality,
                appeal_decay,
                intro_day: day,
                category_id,
                brand_id,
                shop_id,
                base_price,
                content,
            },
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_has_four_phases() {
        let cfg = SimConfig::default();
        let decay = 0.04;
        let intro = life_curve(0.0, &cfg, decay);
        let growth = life_curve(8.0, &cfg, decay);
        let mature = life_curve(25.0, &cfg, decay);
        let decline = life_curve(60.0, &cfg, decay);
        assert!(intro < 0.1);
        assert!(growth > intro * 3.0);
        assert!(mature > growth);
        assert!(decline < mature * 0.5);
        assert!(life_curve(200.0, &cfg, decay) < 0.01);
    }

    #[test]
    fn zero_quality_means_zero_ctr() {
        let cfg = SimConfig::default();
        let (_, latent) = spawn_cohort(1, 0, 0, 9, &cfg).unwrap().remove(0);
        let mut dead = latent;
        dead.quality = 0.0;
        assert_eq!(ctr_true(&dead, 20.0, 1.0, &cfg), 0.0);
    }

    #[test]
    fn deeper_discount_converts_better() {
        let cfg = SimConfig::default();
        let (_, latent) = spawn_cohort(1, 0, 0, 9, &cfg).unwrap().remove(0);
        assert!(cvr_true(&latent, 0.6, &cfg) > cvr_true(&latent, 1.0, &cfg));
    }

    #[test]
    fn spawn_is_deterministic_and_rejects_zero() {
        let cfg = SimConfig::default();
        assert!(spawn_cohort(0, 0, 0, 1, &cfg).is_err());
        let a = spawn_cohort(5, 3, 10, 42, &cfg).unwrap();
        let b = spawn_cohort(5, 3, 10, 42, &cfg).unwrap();
        assert_eq!(a, b);
        let c = spawn_cohort(5, 3, 10, 43, &cfg).unwrap();
        assert_ne!(a, c);
        assert_eq!(a[0].0, ItemId(10));
        assert_eq!(a[4].0, ItemId(14));
    }

    #[test]
    fn high_potential_fraction_matches_config() {
        let cfg = SimConfig::default();
        let items = spawn_cohort(10_000, 0, 0, 7, &cfg).unwrap();
        let high = items
            .iter()
            .filter(|(_, l)| l.quality >= cfg.quality_threshold)
            .count();
        let frac = high as f64 / items.len() as f64;
        assert!(
            (frac - cfg.high_potential_frac).abs() < 0.02,
            "high-potential fraction {frac}"
        );
    }

    #[test]
    fn content_correlates_with_quality() {
        let cfg = SimConfig::default();
        let (_, dir) = content_geometry(11, &cfg);
        let items = spawn_cohort(2000, 0, 0, 11, &cfg).unwrap();
        // Projection onto the quality direction should track quality.
        let mut num = 0.0;
        let mut dq = 0.0;
        let mut dp = 0.0;
        let qm = items.iter().map(|(_, l)| l.quality).sum::<f64>() / items.len() as f64;
        let proj = |l: &ItemLatent| l.content.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>();
        let pm = items.iter().map(|(_, l)| proj(l)).sum::<f64>() / items.len() as f64;
        for (_, l) in &items {
            let a = l.quality - qm;
            let b = proj(l) - pm;
            num += a * b;
            dq += a * a;
            dp += b * b;
        }
        let corr = num / (dq.sqrt() * dp.sqrt());
        assert!(corr > 0.6, "quality-content correlation {corr}");
    }
}
