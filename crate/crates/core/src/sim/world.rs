//! The day-stepped item marketplace. A world owns a population of items
//! with hidden latents, allocates a fixed daily impression budget per pool
//! according to blended scores, draws clicks and sales from the true
//! funnel probabilities, feeds realized engagement back into organic
//! traffic, and emits experience transitions with the one-day reward lag
//! the return definition requires.

use std::collections::BTreeMap;

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::map_ordered;
use crate::mdp::formulas::{reward, REWARD_EPSILON};
use crate::mdp::types::{
    Action, InherentFeatures, ItemId, NominalState, Observation, Transition,
};
use crate::nn::softmax;
use crate::rank::{alpha, mix, MixerConfig};
use crate::sim::config::SimConfig;
use crate::sim::latent::{ctr_true, cvr_true, spawn_cohort, ItemLatent};
use crate::sim::trend::{AggHistory, ScopeKey, TrendField};
use crate::streams::{stream, Tag};

/// Per-item directive for one simulated day: the agent's action, the
/// critic's value estimate (drives the blend weight), and the mixer to
/// blend with. Pure-relevance pools pass a fixed-alpha mixer of zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInput {
    pub action: Action,
    pub q: f64,
    pub mixer: MixerConfig,
}

impl StepInput {
    /// Baseline directive: neutral affinity, full price, pure ctr ranking.
    pub fn vanilla() -> Self {
        StepInput {
            action: Action { y_rl: 0.5, price: 1.0 },
            q: 0.0,
            mixer: MixerConfig::with_fixed_alpha(0.0).expect("fixed alpha 0 is valid"),
        }
    }
}

/// Everything that happened to one item during one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyOutcome {
    pub item: ItemId,
    pub day: u32,
    pub pv_rec: u64,
    pub pv_other: u64,
    pub pv_total: u64,
    pub ipv: u64,
    pub sls: u64,
    pub gmv: f64,
    pub price_ratio: f64,
    pub y_ctr: f64,
    pub alpha: f64,
    pub y_final: f64,
}

impl DailyOutcome {
    pub fn validate(&self) -> Result<()> {
        if self.pv_rec + self.pv_other != self.pv_total {
            return Err(Error::domain("pv_total must equal pv_rec + pv_other"));
        }
        if self.ipv > self.pv_total || self.sls > self.ipv {
            return Err(Error::domain("funnel violated: need ipv <= pv_total, sls <= ipv"));
        }
        Ok(())
    }
}

/// One stepped day: per-item outcomes plus the transitions that became
/// complete (they describe the previous day).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayResult {
    pub day: u32,
    pub outcomes: BTreeMap<ItemId, DailyOutcome>,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ItemState {
    latent: ItemLatent,
    nominal: NominalState,
    pool: usize,
    /// Organic views that will arrive with the next simulated day.
    pv_other_next: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PendingStep {
    obs: Observation,
    action: Action,
    pv_rec: u64,
    day: u32,
}

/// Shrinkage click-rate estimate: empirical clicks over views pulled
/// toward the global prior, with the prior's weight fading as history
/// accumulates.
pub fn ctr_estimate(ipv_cum: f64, pv_cum: f64, cfg: &SimConfig) -> f64 {
    (ipv_cum + cfg.shrinkage_kappa * cfg.ctr_prior) / (pv_cum + cfg.shrinkage_kappa)
}

/// Organic views for the next day given cumulative engagement. With a
/// zero feedback coefficient this is the constant base level.
pub fn organic_next(ipv_cum: f64, sls_cum: f64, cfg: &SimConfig) -> u64 {
    let level = cfg.organic_base * (1.0 + cfg.feedback_coef * (ipv_cum + 0.5 * sls_cum).ln_1p());
    level.round().max(0.0) as u64
}

/// Temperature softmax over scores; the share of the daily budget each
/// candidate attracts.
pub fn softmax_shares(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::domain("softmax_shares: empty score list"));
    }
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::config("softmax_shares: temperature must be positive"));
    }
    if let Some(bad) = scores.iter().find(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("softmax_shares: non-finite score {bad}")));
    }
    let scaled: Vec<f64> = scores.iter().map(|s| s / temperature).collect();
    Ok(softmax(&scaled))
}

/// Split an integer impression budget across items proportionally to the
/// temperature softmax of their scores, using largest-remainder rounding
/// so the grants sum to the budget exactly.
pub fn allocate_impressions(
    entries: &[(ItemId, f64)],
    budget: u64,
    temperature: f64,
) -> Result<BTreeMap<ItemId, u64>> {
    let scores: Vec<f64> = entries.iter().map(|(_, s)| *s).collect();
    let shares = softmax_shares(&scores, temperature)?;
    let mut grants: Vec<u64> = Vec::with_capacity(entries.len());
    let mut order: Vec<(f64, ItemId, usize)> = Vec::with_capacity(entries.len());
    let mut assigned = 0u64;
    for (i, share) in shares.iter().enumerate() {
        let raw = share * budget as f64;
        let base = raw.floor() as u64;
        grants.push(base);
        assigned += base;
        order.push((raw - base as f64, entries[i].0, i));
    }
    let mut deficit = budget.saturating_sub(assigned);
    order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for (_, _, idx) in order {
        if deficit == 0 {
            break;
        }
        grants[idx] += 1;
        deficit -= 1;
    }
    Ok(entries
        .iter()
        .zip(grants)
        .map(|((id, _), g)| (*id, g))
        .collect())
}

/// The simulated marketplace. Serializable in full so a run can snapshot
/// and resume mid-timeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimWorld {
    cfg: SimConfig,
    pool_budgets: Vec<u64>,
    day: u32,
    next_id: u32,
    #[serde(with = "crate::serde_util::map_pairs")]
    items: BTreeMap<ItemId, ItemState>,
    trend: TrendField,
    agg: AggHistory,
    #[serde(with = "crate::serde_util::map_pairs")]
    pending: BTreeMap<ItemId, PendingStep>,
}

impl SimWorld {
    /// An empty world with one impression pool per budget entry.
    pub fn new(cfg: SimConfig, pool_budgets: Vec<u64>) -> Result<Self> {
        cfg.validate()?;
        if pool_budgets.is_empty() {
            return Err(Error::config("world needs at least one impression pool"));
        }
        if pool_budgets.iter().any(|b| *b == 0) {
            return Err(Error::config("pool budgets must be positive"));
        }
        let trend = TrendField::new(&cfg);
        Ok(SimWorld {
            cfg,
            pool_budgets,
            day: 0,
            next_id: 0,
            items: BTreeMap::new(),
            trend,
            agg: AggHistory::new(),
            pending: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn day(&self) -> u32 {
        self.day
    }

    pub fn ids(&self) -> Vec<ItemId> {
        self.items.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn latent(&self, id: ItemId) -> Option<&ItemLatent> {
        self.items.get(&id).map(|s| &s.latent)
    }

    pub fn pool_of(&self, id: ItemId) -> Option<usize> {
        self.items.get(&id).map(|s| s.pool)
    }

    /// Spawn a cohort of `n` fresh items into a pool today.
    pub fn spawn(&mut self, n: usize, pool: usize) -> Result<Vec<ItemId>> {
        if pool >= self.pool_budgets.len() {
            return Err(Error::config(format!("pool {pool} does not exist")));
        }
        let cohort = spawn_cohort(n, self.day, self.next_id, self.cfg.seed, &self.cfg)?;
        let mut ids = Vec::with_capacity(n);
        for (id, latent) in cohort {
            ids.push(id);
            self.insert_state(id, latent, pool);
        }
        self.next_id += n as u32;
        Ok(ids)
    }

    /// Insert a single item with an explicit latent; used by controlled
    /// experiments that need exact ground truth.
    pub fn insert_item(&mut self, mut latent: ItemLatent, pool: usize) -> Result<ItemId> {
        if pool >= self.pool_budgets.len() {
            return Err(Error::config(format!("pool {pool} does not exist")));
        }
        if latent.content.len() != self.cfg.content_dim {
            return Err(Error::config("latent content dimension mismatch"));
        }
        if !(0.0..1.0).contains(&latent.quality) {
            return Err(Error::domain("latent quality outside [0, 1)"));
        }
        if latent.intro_day > self.day {
            return Err(Error::domain("latent intro_day is in the future"));
        }
        latent.category_id %= self.cfg.n_categories as u32;
        latent.brand_id %= self.cfg.n_brands as u32;
        latent.shop_id %= self.cfg.n_shops as u32;
        let id = ItemId(self.next_id);
        self.next_id += 1;
        self.insert_state(id, latent, pool);
        Ok(id)
    }

    fn insert_state(&mut self, id: ItemId, latent: ItemLatent, pool: usize) {
        let state = ItemState {
            nominal: NominalState::fresh(0.0, 0.0, 0.0),
            pv_other_next: organic_next(0.0, 0.0, &self.cfg),
            latent,
            pool,
        };
        self.items.insert(id, state);
    }

    /// Shrinkage ctr score for one item, the relevance ranker's estimate.
    pub fn ctr_score(&self, id: ItemId) -> Result<f64> {
        let st = self
            .items
            .get(&id)
            .ok_or_else(|| Error::protocol(format!("unknown item {}", id.0)))?;
        Ok(ctr_estimate(st.nominal.ipv_cum, st.nominal.pv_cum, &self.cfg))
    }

    /// The observation an agent sees for one item at the start of today.
    pub fn observe(&self, id: ItemId) -> Result<Observation> {
        let st = self
            .items
            .get(&id)
            .ok_or_else(|| Error::protocol(format!("unknown item {}", id.0)))?;
        let mut nominal = st.nominal.clone();
        nominal.days_on_market = self.day - st.latent.intro_day;
        Ok(Observation {
            s: nominal,
            x_t: self
                .agg
                .factors_for(st.latent.shop_id, st.latent.brand_id, st.latent.category_id),
            x_i: InherentFeatures {
                content: st.latent.content.clone(),
                category_id: st.latent.category_id,
                brand_id: st.latent.brand_id,
                shop_id: st.latent.shop_id,
            },
        })
    }

    /// Observations for every live item at the start of today.
    pub fn observations(&self) -> Result<BTreeMap<ItemId, Observation>> {
        self.items
            .keys()
            .map(|id| Ok((*id, self.observe(*id)?)))
            .collect()
    }

    /// Simulate one day. Requires exactly one directive per live item.
    pub fn step_day(&mut self, inputs: &BTreeMap<ItemId, StepInput>) -> Result<DayResult> {
        let day = self.day;
        for id in self.items.keys() {
            if !inputs.contains_key(id) {
                return Err(Error::protocol(format!(
                    "step_day: live item {} has no directive",
                    id.0
                )));
            }
        }
        for id in inputs.keys() {
            if !self.items.contains_key(id) {
                return Err(Error::protocol(format!(
                    "step_day: directive for unknown item {}",
                    id.0
                )));
            }
        }

        let obs_now = self.observations()?;

        // Blend relevance with the long-term score, then split each pool's
        // budget by temperature softmax.
        let mut scored: BTreeMap<ItemId, (f64, f64, f64)> = BTreeMap::new();
        let mut per_pool: Vec<Vec<(ItemId, f64)>> = vec![Vec::new(); self.pool_budgets.len()];
        for (id, st) in &self.items {
            let input = &inputs[id];
            let y_ctr = ctr_estimate(st.nominal.ipv_cum, st.nominal.pv_cum, &self.cfg);
            let a = alpha(input.q, &input.mixer)?;
            let y_final = mix(y_ctr, input.action.y_rl, a);
            scored.insert(*id, (y_ctr, a, y_final));
            per_pool[st.pool].push((*id, y_final));
        }
        let mut pv_rec: BTreeMap<ItemId, u64> = BTreeMap::new();
        for (pool, members) in per_pool.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let grants =
                allocate_impressions(members, self.pool_budgets[pool], self.cfg.alloc_temperature)?;
            pv_rec.extend(grants);
        }

        // Funnel draws, data-parallel per item with counter-keyed streams.
        let work: Vec<(ItemId, u64, u64, f64, f64)> = self
            .items
            .iter()
            .map(|(id, st)| {
                let age = (day - st.latent.intro_day) as f64;
                let t = self.trend.multiplier(
                    day,
                    st.latent.category_id,
                    st.latent.brand_id,
                    st.latent.shop_id,
                    &self.cfg,
                );
                let ctr = ctr_true(&st.latent, age, t, &self.cfg);
                (*id, pv_rec[id], st.pv_other_next, ctr, inputs[id].action.price)
            })
            .collect();
        let seed = self.cfg.seed;
        let cfg = self.cfg.clone();
        let latents: BTreeMap<ItemId, ItemLatent> = self
            .items
            .iter()
            .map(|(id, st)| (*id, st.latent.clone()))
            .collect();
        let drawn: Vec<DailyOutcome> = map_ordered(&work, |(id, rec, other, ctr, price)| {
            let pv_total = rec + other;
            let mut click_rng = stream(seed, Tag::ClickDraw, &[day as u64, id.0 as u64]);
            let ipv = Binomial::new(pv_total, *ctr)
                .expect("ctr is a probability")
                .sample(&mut click_rng);
            let cvr = cvr_true(&latents[id], *price, &cfg);
            let mut sale_rng = stream(seed, Tag::SaleDraw, &[day as u64, id.0 as u64]);
            let sls = Binomial::new(ipv, cvr)
                .expect("cvr is a probability")
                .sample(&mut sale_rng);
            let (y_ctr, a, y_final) = scored[id];
            DailyOutcome {
                item: *id,
                day,
                pv_rec: *rec,
                pv_other: *other,
                pv_total,
                ipv,
                sls,
                gmv: sls as f64 * latents[id].base_price * price,
                price_ratio: *price,
                y_ctr,
                alpha: a,
                y_final,
            }
        });

        // Sequential state update in id order: nominal counters, crowd
        // summaries, next-day organic traffic, per-scope aggregates.
        let mut market = [0.0; 3];
        let mut by_cat: BTreeMap<u32, [f64; 3]> = BTreeMap::new();
        let mut by_brand: BTreeMap<u32, [f64; 3]> = BTreeMap::new();
        let mut by_shop: BTreeMap<u32, [f64; 3]> = BTreeMap::new();
        let mut outcomes: BTreeMap<ItemId, DailyOutcome> = BTreeMap::new();
        let decay = self.cfg.crowd_decay;
        for out in drawn {
            let st = self.items.get_mut(&out.item).expect("drawn item exists");
            let n = &mut st.nominal;
            n.pv_today = out.pv_total as f64;
            n.ipv_today = out.ipv as f64;
            n.sls_today = out.sls as f64;
            n.pv_cum += out.pv_total as f64;
            n.ipv_cum += out.ipv as f64;
            n.sls_cum += out.sls as f64;
            n.crowd_size = decay * n.crowd_size + out.pv_total as f64;
            let daily_ctr = out.ipv as f64 / (out.pv_total as f64).max(1.0);
            n.crowd_activeness = decay * n.crowd_activeness + (1.0 - decay) * daily_ctr;
            let spend = if out.sls > 0 { out.gmv / out.sls as f64 } else { 0.0 };
            n.crowd_purchase_power =
                decay * n.crowd_purchase_power + (1.0 - decay) * spend / 100.0;
            st.pv_other_next = organic_next(n.ipv_cum, n.sls_cum, &self.cfg);

            let add = |slot: &mut [f64; 3]| {
                slot[0] += out.pv_total as f64;
                slot[1] += out.ipv as f64;
                slot[2] += out.sls as f64;
            };
            add(&mut market);
            add(by_cat.entry(st.latent.category_id).or_default());
            add(by_brand.entry(st.latent.brand_id).or_default());
            add(by_shop.entry(st.latent.shop_id).or_default());
            outcomes.insert(out.item, out);
        }
        self.agg.push(ScopeKey::Market, market);
        let ceff = self.trend.campaign_effective(day, &self.cfg);
        self.agg.push(ScopeKey::Campaign, [ceff, ceff, ceff]);
        for k in 0..self.cfg.n_categories as u32 {
            self.agg
                .push(ScopeKey::Category(k), by_cat.get(&k).copied().unwrap_or_default());
        }
        for k in 0..self.cfg.n_brands as u32 {
            self.agg
                .push(ScopeKey::Brand(k), by_brand.get(&k).copied().unwrap_or_default());
        }
        for k in 0..self.cfg.n_shops as u32 {
            self.agg
                .push(ScopeKey::Shop(k), by_shop.get(&k).copied().unwrap_or_default());
        }

        // Yesterday's steps are now complete: today's item views realize
        // the return on yesterday's exposure.
        let mut transitions = Vec::with_capacity(self.pending.len());
        let pending = std::mem::take(&mut self.pending);
        for (id, pend) in pending {
            let ipv_next = outcomes[&id].ipv as f64;
            let r = reward(ipv_next, pend.pv_rec as f64, REWARD_EPSILON)?;
            transitions.push(Transition {
                item: id,
                day: pend.day,
                obs: pend.obs,
                action: pend.action,
                reward: r,
                next_obs: obs_now[&id].clone(),
                terminal: false,
            });
        }
        for (id, obs) in obs_now {
            self.pending.insert(
                id,
                PendingStep {
                    obs,
                    action: inputs[&id].action,
                    pv_rec: pv_rec[&id],
                    day,
                },
            );
        }

        self.trend.advance(day, self.cfg.seed, &self.cfg);
        self.day += 1;
        Ok(DayResult {
            day,
            outcomes,
            transitions,
        })
    }

    /// Step `n` days under the pure-relevance baseline policy.
    pub fn run_vanilla_days(&mut self, n: u32) -> Result<Vec<DayResult>> {
        let mut out = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let inputs: BTreeMap<ItemId, StepInput> = self
                .ids()
                .into_iter()
                .map(|id| (id, StepInput::vanilla()))
                .collect();
            out.push(self.step_day(&inputs)?);
        }
        Ok(out)
    }
}
