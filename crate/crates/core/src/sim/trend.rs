//! Exogenous market trends and the observable growth features derived
//! from them. Each scope (market, campaign, shop, brand, category) has a
//! latent demand level following a clamped geometric random walk; the
//! campaign level additionally carries a sinusoidal seasonality. Items
//! observe none of this directly: they see moving-average growth rates of
//! the per-scope pv/ipv/sls aggregates, which the latent levels drive.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::mdp::types::{TrendFactors, TREND_DIM};
use crate::sim::config::SimConfig;
use crate::streams::{stream, Tag};

/// Bounds for every latent demand level; keeps click probabilities sane.
const LEVEL_LO: f64 = 0.7;
const LEVEL_HI: f64 = 1.4;
/// Days of aggregate history retained (enough for a 3-day MA and its lag).
const AGG_WINDOW: usize = 6;
/// Moving-average width for the growth features.
const MA_DAYS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendField {
    market: f64,
    campaign: f64,
    cats: Vec<f64>,
    brands: Vec<f64>,
    shops: Vec<f64>,
}

impl TrendField {
    pub fn new(cfg: &SimConfig) -> Self {
        TrendField {
            market: 1.0,
            campaign: 1.0,
            cats: vec![1.0; cfg.n_categories],
            brands: vec![1.0; cfg.n_brands],
            shops: vec![1.0; cfg.n_shops],
        }
    }

    /// Campaign level including the seasonal component for the given day.
    pub fn campaign_effective(&self, day: u32, cfg: &SimConfig) -> f64 {
        let phase = 2.0 * std::f64::consts::PI * day as f64 / cfg.campaign_period;
        self.campaign * (1.0 + cfg.campaign_amp * phase.sin())
    }

    /// Demand multiplier applied to an item's true click probability.
    pub fn multiplier(&self, day: u32, cat: u32, brand: u32, shop: u32, cfg: &SimConfig) -> f64 {
        self.market
            * self.campaign_effective(day, cfg)
            * self.cats[cat as usize % self.cats.len()]
            * self.brands[brand as usize % self.brands.len()]
            * self.shops[shop as usize % self.shops.len()]
    }

    /// Advance every level by one day of geometric random walk. Draws are
    /// keyed by (day, scope index) so the field evolves identically no
    /// matter how many items exist or in what order they are processed.
    pub fn advance(&mut self, day: u32, seed: u64, cfg: &SimConfig) {
        let n_cats = self.cats.len();
        let n_brands = self.brands.len();
        let mut scope = 0u64;
        let walk = |level: &mut f64, scope_idx: u64| {
            let mut rng = stream(seed, Tag::TrendWalk, &[day as u64, scope_idx]);
            let z: f64 = StandardNormal.sample(&mut rng);
            *level = (*level * (cfg.trend_sigma * z).exp()).clamp(LEVEL_LO, LEVEL_HI);
        };
        walk(&mut self.market, scope);
        scope += 1;
        walk(&mut self.campaign, scope);
        scope += 1;
        for k in 0..n_cats {
            walk(&mut self.cats[k], scope + k as u64);
        }
        scope += n_cats as u64;
        for k in 0..n_brands {
            walk(&mut self.brands[k], scope + k as u64);
        }
        scope += n_brands as u64;
        for k in 0..self.shops.len() {
            let mut rng = stream(seed, Tag::TrendWalk, &[day as u64, scope + k as u64]);
            let z: f64 = StandardNormal.sample(&mut rng);
            self.shops[k] = (self.shops[k] * (cfg.trend_sigma * z).exp()).clamp(LEVEL_LO, LEVEL_HI);
        }
    }
}

/// Scope identifier for an aggregate pv/ipv/sls series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScopeKey {
    Market,
    Campaign,
    Category(u32),
    Brand(u32),
    Shop(u32),
}

/// Rolling per-scope daily totals, the raw series behind the growth
/// features items observe.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggHistory {
    #[serde(with = "crate::serde_util::map_pairs")]
    series: BTreeMap<ScopeKey, VecDeque<[f64; 3]>>,
}

impl AggHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one day of totals for a scope, trimming old history.
    pub fn push(&mut self, key: ScopeKey, totals: [f64; 3]) {
        let q = self.series.entry(key).or_default();
        q.push_back(totals);
        while q.len() > AGG_WINDOW {
            q.pop_front();
        }
    }

    /// Moving-average growth of one metric for a scope: the relative
    /// change of the 3-day moving average versus the same average one day
    /// earlier. Returns 0 until two days of history exist.
    pub fn magp(&self, key: ScopeKey, metric: usize) -> f64 {
        let Some(q) = self.series.get(&key) else {
            return 0.0;
        };
        let n = q.len();
        if n < 2 {
            return 0.0;
        }
        let mean_ending = |end: usize| {
            let w = MA_DAYS.min(end);
            let sum: f64 = (end - w..end).map(|i| q[i][metric]).sum();
            sum / w as f64
        };
        let now = mean_ending(n);
        let prev = mean_ending(n - 1);
        (now - prev) / prev.abs().max(1.0)
    }

    /// Assemble the 15 growth features an item observes, source-major in
    /// the order market, campaign, seller, brand, category.
    pub fn factors_for(&self, shop: u32, brand: u32, cat: u32) -> TrendFactors {
        let keys = [
            ScopeKey::Market,
            ScopeKey::Campaign,
            ScopeKey::Shop(shop),
            ScopeKey::Brand(brand),
            ScopeKey::Category(cat),
        ];
        let mut magp = [0.0; TREND_DIM];
        for (s, key) in keys.iter().enumerate() {
            for m in 0..3 {
                magp[s * 3 + m] = self.magp(*key, m);
            }
        }
        TrendFactors { magp }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_stay_clamped_and_deterministic() {
        let cfg = SimConfig {
            trend_sigma: 0.5,
            ..SimConfig::default()
        };
        let mut a = TrendField::new(&cfg);
        let mut b = TrendField::new(&cfg);
        for day in 0..200 {
            a.advance(day, 5, &cfg);
            b.advance(day, 5, &cfg);
        }
        assert_eq!(a, b);
        assert!(a.market >= LEVEL_LO && a.market <= LEVEL_HI);
        for v in a.cats.iter().chain(&a.brands).chain(&a.shops) {
            assert!(*v >= LEVEL_LO && *v <= LEVEL_HI);
        }
    }

    #[test]
    fn zero_sigma_freezes_walk_but_not_season() {
        let cfg = SimConfig {
            trend_sigma: 0.0,
            ..SimConfig::default()
        };
        let mut f = TrendField::new(&cfg);
        for day in 0..30 {
            f.advance(day, 1, &cfg);
        }
        assert_eq!(f.market, 1.0);
        let lo = f.campaign_effective(0, &cfg);
        let hi = f.campaign_effective((cfg.campaign_period / 4.0) as u32, &cfg);
        assert!(hi > lo);
    }

    #[test]
    fn magp_tracks_step_change() {
        let mut agg = AggHistory::new();
        for v in [100.0, 100.0, 100.0] {
            agg.push(ScopeKey::Market, [v, v, v]);
        }
        assert!(agg.magp(ScopeKey::Market, 0).abs() < 1e-12);
        agg.push(ScopeKey::Market, [200.0, 200.0, 200.0]);
        // MA jumps from 100 to 400/3.
        let g = agg.magp(ScopeKey::Market, 1);
        assert!((g - (400.0 / 3.0 - 100.0) / 100.0).abs() < 1e-12);
    }

    #[test]
    fn magp_empty_and_short_history_is_zero() {
        let mut agg = AggHistory::new();
        assert_eq!(agg.magp(ScopeKey::Brand(3), 2), 0.0);
        agg.push(ScopeKey::Brand(3), [5.0, 1.0, 0.0]);
        assert_eq!(agg.magp(ScopeKey::Brand(3), 0), 0.0);
    }

    #[test]
    fn factors_layout_is_source_major() {
        let mut agg = AggHistory::new();
        for v in [10.0, 10.0, 10.0, 20.0] {
            agg.push(ScopeKey::Shop(7), [v, 0.0, 0.0]);
        }
        let f = agg.factors_for(7, 0, 0);
        // Seller is source index 2; pv is metric 0.
        assert!(f.magp[2 * 3] > 0.0);
        assert_eq!(f.magp[0], 0.0);
        assert_eq!(f.magp[2 * 3 + 1], 0.0);
    }
}
