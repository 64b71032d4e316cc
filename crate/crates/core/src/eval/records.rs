//! Building the offline evaluation set from a simulation trace.
//!
//! For every live item and evaluation day this produces one record
//! holding the model outputs at that day (affinity, critic value), the
//! relevance-model score actually served, the same-day click label, and
//! the realized forward return over the following horizon. The forward
//! return uses only rewards dated on or after the record day, which are
//! themselves materialized from strictly later traffic, so no metric can
//! peek past its own window.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ItemId, Observation};
use crate::sim::DayResult;
use crate::streams::{stream, Tag};
use crate::trainer::Agent;

/// One evaluated (item, day) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item: ItemId,
    pub day: u32,
    /// Critic estimate at the greedy action.
    pub q_pred: f64,
    /// Actor affinity score.
    pub y_rl: f64,
    /// Relevance-model score served that day.
    pub y_ctr: f64,
    /// Realized discounted return over the horizon.
    pub j_actual: f64,
    /// Whether the item drew at least one detail-page view that day.
    pub clicked: bool,
    pub category_id: u32,
    pub brand_id: u32,
    pub shop_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSetConfig {
    /// Days of realized reward folded into the forward return.
    pub horizon: usize,
    pub gamma: f64,
    /// Evaluation window [start, end) in trace days. Records need their
    /// full reward horizon inside the trace, so late days drop out.
    pub eval_start: u32,
    pub eval_end: u32,
    /// Largest per-day candidate list; bigger cohorts are subsampled
    /// deterministically.
    pub max_list: usize,
    pub seed: u64,
}

impl EvalSetConfig {
    pub fn new(eval_start: u32, eval_end: u32) -> Self {
        EvalSetConfig {
            horizon: 5,
            gamma: 0.5,
            eval_start,
            eval_end,
            max_list: 100,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("eval: horizon must be positive"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("eval: gamma must be in [0, 1)"));
        }
        if self.eval_start >= self.eval_end {
            return Err(Error::config("eval: empty day window"));
        }
        if self.max_list == 0 {
            return Err(Error::config("eval: max_list must be positive"));
        }
        Ok(())
    }
}

/// Per-item chronological view extracted from a trace.
#[derive(Debug, Default)]
pub(super) struct ItemTrack {
    /// day -> (observation at that day, realized reward of that day).
    pub(super) steps: BTreeMap<u32, (Observation, f64)>,
    /// day -> (served relevance score, clicked).
    pub(super) served: BTreeMap<u32, (f64, bool)>,
}

pub(super) fn tracks_from_trace(trace: &[DayResult]) -> BTreeMap<ItemId, ItemTrack> {
    let mut tracks: BTreeMap<ItemId, ItemTrack> = BTreeMap::new();
    for day_result in trace {
        for tr in &day_result.transitions {
            tracks
                .entry(tr.item)
                .or_default()
                .steps
                .insert(tr.day, (tr.obs.clone(), tr.reward));
        }
        for (id, out) in &day_result.outcomes {
            tracks
                .entry(*id)
                .or_default()
                .served
                .insert(out.day, (out.y_ctr, out.ipv > 0));
        }
    }
    tracks
}

/// A per-item trace must cover a contiguous run of days; a gap means the
/// log was truncated or mixed across runs.
pub(super) fn assert_consecutive(item: ItemId, days: &[u32]) -> Result<()> {
    for pair in days.windows(2) {
        if pair[1] != pair[0] + 1 {
            return Err(Error::protocol(format!(
                "item {item}: trace days {} and {} do not chain",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

/// Build the evaluation set: roll the agent's recurrent state along each
/// item's observation sequence, score every day in the window, and attach
/// realized forward returns and click labels.
pub fn build_records(
    trace: &[DayResult],
    agent: &Agent,
    cfg: &EvalSetConfig,
) -> Result<Vec<EvalRecord>> {
    cfg.validate()?;
    let tracks = tracks_from_trace(trace);
    let mut records = Vec::new();
    for (item, track) in &tracks {
        let days: Vec<u32> = track.steps.keys().copied().collect();
        if days.is_empty() {
            continue;
        }
        assert_consecutive(*item, &days)?;
        let mut state = agent.zero_state();
        for &day in &days {
            let (obs, _) = &track.steps[&day];
            let assembled = agent.assemble(obs)?;
            let out = agent.act_greedy(&assembled, &state)?;
            let in_window = day >= cfg.eval_start && day < cfg.eval_end;
            if in_window {
                if let Some(j_actual) = forward_return(track, day, cfg) {
                    let q_pred = agent.q_at(&assembled, &state, &out.action)?;
                    let (y_ctr, clicked) = track
                        .served
                        .get(&day)
                        .copied()
                        .ok_or_else(|| {
                            Error::protocol(format!("item {item}: no outcome for day {day}"))
                        })?;
                    records.push(EvalRecord {
                        item: *item,
                        day,
                        q_pred,
                        y_rl: out.action.y_rl,
                        y_ctr,
                        j_actual,
                        clicked,
                        category_id: obs.x_i.category_id,
                        brand_id: obs.x_i.brand_id,
                        shop_id: obs.x_i.shop_id,
                    });
                }
            }
            state = out.state;
        }
    }
    Ok(subsample_days(records, cfg))
}

/// Discounted sum of the `horizon` realized rewards starting at `day`;
/// `None` when the trace ends before the window completes.
fn forward_return(track: &ItemTrack, day: u32, cfg: &EvalSetConfig) -> Option<f64> {
    let mut total = 0.0;
    let mut weight = 1.0;
    for k in 0..cfg.horizon {
        let (_, reward) = track.steps.get(&(day + k as u32))?;
        total += weight * reward;
        weight *= cfg.gamma;
    }
    Some(total)
}

/// Cap per-day cohorts at `max_list`, sampling by category: each category
/// keeps a share proportional to its head count (largest-remainder
/// rounding), drawn by a deterministic keyed shuffle within the category.
fn subsample_days(records: Vec<EvalRecord>, cfg: &EvalSetConfig) -> Vec<EvalRecord> {
    let mut by_day: BTreeMap<u32, Vec<EvalRecord>> = BTreeMap::new();
    for r in records {
        by_day.entry(r.day).or_default().push(r);
    }
    let mut out = Vec::new();
    for (day, cohort) in by_day {
        if cohort.len() <= cfg.max_list {
            let mut cohort = cohort;
            cohort.sort_by_key(|r| r.item);
            out.extend(cohort);
            continue;
        }
        let mut by_cat: BTreeMap<u32, Vec<EvalRecord>> = BTreeMap::new();
        for r in cohort {
            by_cat.entry(r.category_id).or_default().push(r);
        }
        let counts: Vec<(u32, usize)> = by_cat.iter().map(|(c, v)| (*c, v.len())).collect();
        let quotas = largest_remainder(&counts, cfg.max_list);
        let mut kept = Vec::with_capacity(cfg.max_list);
        for ((cat, _), quota) in counts.iter().zip(quotas) {
            let mut members = by_cat.remove(cat).expect("category present");
            members.sort_by_key(|r| r.item);
            if members.len() > quota {
                let mut rng = stream(cfg.seed, Tag::EvalSample, &[day as u64, *cat as u64]);
                for i in 0..quota {
                    let j = i + rand::Rng::random_range(&mut rng, 0..members.len() - i);
                    members.swap(i, j);
                }
                members.truncate(quota);
            }
            kept.extend(members);
        }
        kept.sort_by_key(|r| r.item);
        out.extend(kept);
    }
    out
}

/// Proportional integer quotas summing exactly to `total`: floor the
/// shares, then hand the leftover units to the largest fractional
/// remainders (ties to the lower category id).
fn largest_remainder(counts: &[(u32, usize)], total: usize) -> Vec<usize> {
    let sum: usize = counts.iter().map(|(_, n)| n).sum();
    let mut quotas = Vec::with_capacity(counts.len());
    let mut remainders = Vec::with_capacity(counts.len());
    let mut assigned = 0;
    for (i, (_, n)) in counts.iter().enumerate() {
        let share = *n as f64 * total as f64 / sum as f64;
        let floor = share.floor() as usize;
        quotas.push(floor);
        assigned += floor;
        remainders.push((i, share - floor as f64));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in remainders.into_iter().take(total - assigned) {
        quotas[i] += 1;
    }
    quotas
}

/// Group records into per-day candidate lists (the unit NDCG is computed
/// over).
pub fn records_by_day(records: &[EvalRecord]) -> BTreeMap<u32, Vec<&EvalRecord>> {
    let mut by_day: BTreeMap<u32, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        by_day.entry(r.day).or_default().push(r);
    }
    by_day
}
