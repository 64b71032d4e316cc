//! Reference scorers the agent is compared against.
//!
//! Two baselines live here. The empirical scorer mimics a merchandiser's
//! rule of thumb: an item is promising to the extent that its category,
//! brand, and shop have historically produced high forward returns. The
//! supervised scorer shares the agent's recurrent trunk but swaps the
//! actor-critic heads for a plain regression head trained on realized
//! forward returns with full-sequence backpropagation, so any ranking gap
//! between the two isolates the contribution of the control objective
//! rather than the network body.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::average_ranks;
use crate::eval::records::{assert_consecutive, tracks_from_trace, EvalRecord};
use crate::mdp::{assemble_observation, Normalizer, Observation};
use crate::nn::{
    check_gradients, clip_global_norm, dense, ActKind, AdamState, FdReport, Gradients, LstmState,
    NodeId, ParamId, ParamSet, Tape,
};
use crate::mdp::ItemId;
use crate::sim::DayResult;
use crate::streams::{stream, Tag};
use crate::trunk::{trunk_forward_nodes, AblationMode, NetDims, NetIds};

/// Midrank percentile: strictly inside (0, 1) for 1-based average ranks.
fn percentile_of_rank(rank: f64, n: usize) -> f64 {
    (rank - 0.5) / n as f64
}

/// Relative importance of the three group hierarchies in the empirical
/// score. Weights are normalized internally, only ratios matter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalWeights {
    pub category: f64,
    pub brand: f64,
    pub shop: f64,
}

impl Default for EmpiricalWeights {
    fn default() -> Self {
        EmpiricalWeights {
            category: 1.0 / 3.0,
            brand: 1.0 / 3.0,
            shop: 1.0 / 3.0,
        }
    }
}

impl EmpiricalWeights {
    fn validate(&self) -> Result<()> {
        let all = [self.category, self.brand, self.shop];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config("empirical weights must be finite and nonnegative"));
        }
        if all.iter().sum::<f64>() <= 0.0 {
            return Err(Error::config("empirical weights must not all be zero"));
        }
        Ok(())
    }
}

/// One historical realized return, tagged with the groups it counts
/// toward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupSample {
    pub category_id: u32,
    pub brand_id: u32,
    pub shop_id: u32,
    pub j: f64,
}

/// Flatten every labeled step of the training sequences into group-tagged
/// return samples, the raw material of the empirical baseline.
pub fn group_history(seqs: &[LabeledSequence]) -> Vec<GroupSample> {
    let mut out = Vec::new();
    for seq in seqs {
        for (o, label) in seq.obs.iter().zip(&seq.labels) {
            if let Some(j) = label {
                out.push(GroupSample {
                    category_id: o.x_i.category_id,
                    brand_id: o.x_i.brand_id,
                    shop_id: o.x_i.shop_id,
                    j: *j,
                });
            }
        }
    }
    out
}

/// Score evaluation items by the historical performance of the groups
/// they belong to: average realized return per category / brand / shop
/// over `history`, convert each group mean to its midrank percentile
/// among peer groups, and blend the three percentiles per item. A group
/// the history never saw falls back to 0.5, the percentile the pooled
/// history assigns itself. Scores are strictly inside (0, 1).
pub fn empirical_scores(
    records: &[EvalRecord],
    history: &[GroupSample],
    weights: EmpiricalWeights,
) -> Result<BTreeMap<ItemId, f64>> {
    weights.validate()?;
    if records.is_empty() {
        return Err(Error::config("empirical baseline: no evaluation records"));
    }
    if history.is_empty() {
        return Err(Error::config("empirical baseline: empty history"));
    }
    let categories = group_percentiles(history, |s| s.category_id)?;
    let brands = group_percentiles(history, |s| s.brand_id)?;
    let shops = group_percentiles(history, |s| s.shop_id)?;
    let lookup = |map: &BTreeMap<u32, f64>, id: u32| map.get(&id).copied().unwrap_or(0.5);

    let norm = weights.category + weights.brand + weights.shop;
    let mut scores = BTreeMap::new();
    let mut groups_of: BTreeMap<ItemId, (u32, u32, u32)> = BTreeMap::new();
    for r in records {
        let trio = (r.category_id, r.brand_id, r.shop_id);
        if let Some(prev) = groups_of.insert(r.item, trio) {
            if prev != trio {
                return Err(Error::protocol(format!(
                    "item {} changes group membership across records",
                    r.item
                )));
            }
        }
        let blended = (weights.category * lookup(&categories, r.category_id)
            + weights.brand * lookup(&brands, r.brand_id)
            + weights.shop * lookup(&shops, r.shop_id))
            / norm;
        scores.insert(r.item, blended);
    }
    Ok(scores)
}

/// Mean realized return per group, then each group's midrank percentile
/// among the groups of the same kind.
fn group_percentiles(
    history: &[GroupSample],
    key: impl Fn(&GroupSample) -> u32,
) -> Result<BTreeMap<u32, f64>> {
    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for s in history {
        let e = sums.entry(key(s)).or_insert((0.0, 0));
        e.0 += s.j;
        e.1 += 1;
    }
    let ids: Vec<u32> = sums.keys().copied().collect();
    let means: Vec<f64> = ids.iter().map(|id| sums[id].0 / sums[id].1 as f64).collect();
    let ranks = average_ranks(&means)?;
    Ok(ids
        .iter()
        .zip(&ranks)
        .map(|(&id, &rank)| (id, percentile_of_rank(rank, ids.len())))
        .collect())
}

/// One item's chronological observations with regression labels where the
/// full reward horizon fits inside the supplied trace. Temporal splits are
/// enforced by slicing the trace before calling [`training_sequences`]: a
/// label can only ever be built from rewards present in that slice.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub item: ItemId,
    pub start_day: u32,
    pub obs: Vec<Observation>,
    /// Discounted forward return per step, `None` once the horizon runs
    /// past the end of the trace.
    pub labels: Vec<Option<f64>>,
}

impl LabeledSequence {
    pub fn labeled_steps(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }
}

/// Extract per-item training sequences from a trace. The label at day `d`
/// is the discounted sum of the `horizon` realized rewards starting at
/// `d`, matching the target the evaluation set ranks against.
pub fn training_sequences(
    trace: &[DayResult],
    horizon: usize,
    gamma: f64,
) -> Result<Vec<LabeledSequence>> {
    if horizon == 0 {
        return Err(Error::config("regression label horizon must be positive"));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::config("regression label gamma must be in [0, 1)"));
    }
    let tracks = tracks_from_trace(trace);
    let mut seqs = Vec::new();
    for (item, track) in &tracks {
        let days: Vec<u32> = track.steps.keys().copied().collect();
        if days.is_empty() {
            continue;
        }
        assert_consecutive(*item, &days)?;
        let mut obs = Vec::with_capacity(days.len());
        let mut labels = Vec::with_capacity(days.len());
        for &day in &days {
            obs.push(track.steps[&day].0.clone());
            let mut total = 0.0;
            let mut weight = 1.0;
            let mut complete = true;
            for k in 0..horizon {
                match track.steps.get(&(day + k as u32)) {
                    Some((_, reward)) => {
                        total += weight * reward;
                        weight *= gamma;
                    }
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            labels.push(complete.then_some(total));
        }
        seqs.push(LabeledSequence {
            item: *item,
            start_day: days[0],
            obs,
            labels,
        });
    }
    Ok(seqs)
}

/// Outcome of a supervised training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    /// Full epochs completed before stopping.
    pub epochs_run: usize,
    /// Mean per-sequence loss over the last completed epoch.
    pub final_loss: f64,
    /// True when a non-finite loss or gradient stopped training early.
    pub diverged: bool,
}

#[derive(Debug, Clone, Copy)]
struct HeadIds {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Sequence regressor sharing the agent's trunk: ID embeddings, inherent
/// encoder, and LSTM, followed by a dense head on `[o_e, h]` that predicts
/// the forward return. Trained with full-sequence backpropagation.
#[derive(Debug)]
pub struct LstmBaseline {
    dims: NetDims,
    ids: NetIds,
    head: HeadIds,
    params: ParamSet,
    adam: AdamState,
    normalizer: Normalizer,
    clip_norm: f64,
    diverged: bool,
}

impl LstmBaseline {
    pub fn new(dims: NetDims, lr: f64, seed: u64) -> Result<Self> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::config(format!("learning rate {lr} out of range")));
        }
        let mut rng = stream(seed, Tag::ParamInit, &[2]);
        let mut params = ParamSet::new();
        let ids = NetIds::register(&mut params, &dims, &mut rng)?;
        let head_in = dims.o_e_dim() + dims.hidden;
        let head = HeadIds {
            w1: params.add_matrix("sup.head_w1", dims.critic_hidden, head_in, &mut rng)?,
            b1: params.add_vector("sup.head_b1", dims.critic_hidden, 0.0)?,
            w2: params.add_matrix("sup.head_w2", 1, dims.critic_hidden, &mut rng)?,
            b2: params.add_vector("sup.head_b2", 1, 0.0)?,
        };
        let mut group = ids.trunk_group();
        group.extend([head.w1, head.b1, head.w2, head.b2]);
        let adam = AdamState::new(&params, group, lr);
        Ok(LstmBaseline {
            dims,
            ids,
            head,
            params,
            adam,
            normalizer: Normalizer::identity(),
            clip_norm: 5.0,
            diverged: false,
        })
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    /// Fit the feature normalizer once over the training observations;
    /// later calls keep the frozen statistics so resumed or repeated
    /// training sees identical inputs.
    fn ensure_normalizer(&mut self, seqs: &[LabeledSequence]) -> Result<()> {
        if self.normalizer.is_fitted() {
            return Ok(());
        }
        let rows: Vec<_> = seqs
            .iter()
            .flat_map(|s| s.obs.iter().map(|o| o.numeric_raw()))
            .collect();
        if !rows.is_empty() {
            self.normalizer = Normalizer::fit(&rows)?;
        }
        Ok(())
    }

    /// Run `epochs` passes of per-sequence full-BPTT updates in a
    /// deterministically shuffled item order. A non-finite loss or
    /// gradient flags divergence and stops before touching the weights.
    pub fn train(
        &mut self,
        seqs: &[LabeledSequence],
        epochs: usize,
        seed: u64,
    ) -> Result<TrainSummary> {
        let labeled: Vec<usize> =
            (0..seqs.len()).filter(|&i| seqs[i].labeled_steps() > 0).collect();
        if labeled.is_empty() {
            return Err(Error::config("supervised baseline: no labeled sequences"));
        }
        self.ensure_normalizer(seqs)?;
        let mut last_mean = f64::NAN;
        for epoch in 0..epochs {
            let mut order = labeled.clone();
            let mut rng = stream(seed, Tag::BatchSample, &[epoch as u64]);
            for i in (1..order.len()).rev() {
                let j = rand::Rng::random_range(&mut rng, 0..=i);
                order.swap(i, j);
            }
            let mut sum = 0.0;
            for &si in &order {
                let (loss, mut grads) = {
                    let mut tape = Tape::new(&self.params);
                    let node = sequence_loss(
                        &mut tape,
                        &self.ids,
                        &self.head,
                        &self.dims,
                        &self.normalizer,
                        &seqs[si],
                    )?
                    .expect("sequence was pre-filtered as labeled");
                    let loss = tape.scalar(node);
                    if !loss.is_finite() {
                        self.diverged = true;
                        return Ok(TrainSummary {
                            epochs_run: epoch,
                            final_loss: loss,
                            diverged: true,
                        });
                    }
                    let bp = tape.backward(node, &[1.0])?;
                    (loss, bp.grads)
                };
                if !grads.all_finite() {
                    self.diverged = true;
                    return Ok(TrainSummary {
                        epochs_run: epoch,
                        final_loss: loss,
                        diverged: true,
                    });
                }
                clip_global_norm(&mut grads, self.clip_norm);
                self.adam.step(&mut self.params, &grads)?;
                sum += loss;
            }
            last_mean = sum / order.len() as f64;
        }
        Ok(TrainSummary {
            epochs_run: epochs,
            final_loss: last_mean,
            diverged: false,
        })
    }

    /// Predicted forward return at every step of an observation sequence,
    /// rolling the recurrent state from zeros.
    pub fn predict_sequence(&self, obs: &[Observation]) -> Result<Vec<f64>> {
        let mut state = LstmState::zeros(self.dims.hidden);
        let mut preds = Vec::with_capacity(obs.len());
        for o in obs {
            let assembled = assemble_observation(o, &self.normalizer)?;
            let mut tape = Tape::new(&self.params);
            let prev_h = tape.leaf(&state.h);
            let prev_c = tape.leaf(&state.c);
            let out = trunk_forward_nodes(
                &mut tape,
                &self.ids,
                &self.dims,
                &assembled,
                prev_h,
                prev_c,
                AblationMode::Full,
            )?;
            let pred = head_forward(&mut tape, &self.head, out.o_e, out.h)?;
            preds.push(tape.scalar(pred));
            state = LstmState {
                h: tape.value(out.h).to_vec(),
                c: tape.value(out.c).to_vec(),
            };
        }
        Ok(preds)
    }

    /// Predictions for every (item, day) present in a trace, keyed for
    /// joining against the evaluation set.
    pub fn predictions(&self, trace: &[DayResult]) -> Result<BTreeMap<(ItemId, u32), f64>> {
        let tracks = tracks_from_trace(trace);
        let mut out = BTreeMap::new();
        for (item, track) in &tracks {
            let days: Vec<u32> = track.steps.keys().copied().collect();
            if days.is_empty() {
                continue;
            }
            assert_consecutive(*item, &days)?;
            let obs: Vec<Observation> =
                days.iter().map(|d| track.steps[d].0.clone()).collect();
            let preds = self.predict_sequence(&obs)?;
            for (&day, pred) in days.iter().zip(preds) {
                out.insert((*item, day), pred);
            }
        }
        Ok(out)
    }

    /// Finite-difference audit of one full-sequence backward sweep over
    /// every parameter scalar (untouched parameters must show a zero
    /// derivative too).
    pub fn check_sequence_gradients(
        &mut self,
        seq: &LabeledSequence,
        tol: f64,
    ) -> Result<FdReport> {
        if seq.labeled_steps() == 0 {
            return Err(Error::config("gradient audit needs a labeled sequence"));
        }
        let grads: Gradients = {
            let mut tape = Tape::new(&self.params);
            let node =
                sequence_loss(&mut tape, &self.ids, &self.head, &self.dims, &self.normalizer, seq)?
                    .expect("labeled sequence");
            tape.backward(node, &[1.0])?.grads
        };
        let (ids, head, dims) = (self.ids, self.head, self.dims);
        let norm = self.normalizer.clone();
        Ok(check_gradients(&mut self.params, &grads, tol, |p| {
            let mut tape = Tape::new(p);
            let node = sequence_loss(&mut tape, &ids, &head, &dims, &norm, seq)
                .expect("loss rebuild")
                .expect("labeled sequence");
            tape.scalar(node)
        }))
    }
}

fn head_forward(
    tape: &mut Tape<'_>,
    head: &HeadIds,
    o_e: NodeId,
    h: NodeId,
) -> Result<NodeId> {
    let z = tape.concat(&[o_e, h]);
    let hid = dense(tape, head.w1, head.b1, z, ActKind::Relu)?;
    dense(tape, head.w2, head.b2, hid, ActKind::Identity)
}

/// Mean squared error over the labeled steps of one sequence, built as a
/// single graph so gradients flow through every recurrent step. `None`
/// when the sequence has no labels.
fn sequence_loss(
    tape: &mut Tape<'_>,
    ids: &NetIds,
    head: &HeadIds,
    dims: &NetDims,
    norm: &Normalizer,
    seq: &LabeledSequence,
) -> Result<Option<NodeId>> {
    if seq.obs.len() != seq.labels.len() {
        return Err(Error::config("sequence observations and labels disagree in length"));
    }
    let mut h = tape.leaf(&vec![0.0; dims.hidden]);
    let mut c = tape.leaf(&vec![0.0; dims.hidden]);
    let mut sum: Option<NodeId> = None;
    let mut n = 0usize;
    for (o, label) in seq.obs.iter().zip(&seq.labels) {
        let assembled = assemble_observation(o, norm)?;
        let out = trunk_forward_nodes(tape, ids, dims, &assembled, h, c, AblationMode::Full)?;
        h = out.h;
        c = out.c;
        if let Some(y) = label {
            let pred = head_forward(tape, head, out.o_e, out.h)?;
            let neg = tape.leaf(&[-y]);
            let diff = tape.add(pred, neg)?;
            let sq = tape.mul(diff, diff)?;
            sum = Some(match sum {
                None => sq,
                Some(s) => tape.add(s, sq)?,
            });
            n += 1;
        }
    }
    match sum {
        None => Ok(None),
        Some(s) => {
            let scale = tape.leaf(&[1.0 / n as f64]);
            Ok(Some(tape.mul(s, scale)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{SimConfig, SimWorld};

    fn rec(item: u32, day: u32, j: f64, cat: u32, brand: u32, shop: u32) -> EvalRecord {
        EvalRecord {
            item: ItemId(item),
            day,
            q_pred: 0.0,
            y_rl: 0.5,
            y_ctr: 0.5,
            j_actual: j,
            clicked: false,
            category_id: cat,
            brand_id: brand,
            shop_id: shop,
        }
    }

    /// History where each record's own groups saw its own return; used to
    /// pin the arithmetic, not to model a real temporal split.
    fn self_history(records: &[EvalRecord]) -> Vec<GroupSample> {
        records
            .iter()
            .map(|r| GroupSample {
                category_id: r.category_id,
                brand_id: r.brand_id,
                shop_id: r.shop_id,
                j: r.j_actual,
            })
            .collect()
    }

    #[test]
    fn empirical_fixture_matches_hand_computation() {
        // Category means: {0: 2, 1: 6} -> percentiles 0.25 / 0.75.
        // Brand means: {0: 3, 1: 5} -> 0.25 / 0.75.
        // Shop means tie at 4 -> both 0.5.
        let records = vec![
            rec(1, 0, 1.0, 0, 0, 0),
            rec(2, 0, 3.0, 0, 1, 1),
            rec(3, 0, 5.0, 1, 0, 1),
            rec(4, 0, 7.0, 1, 1, 0),
        ];
        let scores =
            empirical_scores(&records, &self_history(&records), EmpiricalWeights::default())
                .unwrap();
        let expect = [
            (1, (0.25 + 0.25 + 0.5) / 3.0),
            (2, (0.25 + 0.75 + 0.5) / 3.0),
            (3, (0.75 + 0.25 + 0.5) / 3.0),
            (4, (0.75 + 0.75 + 0.5) / 3.0),
        ];
        for (id, want) in expect {
            assert!((scores[&ItemId(id)] - want).abs() < 1e-12, "item {id}");
        }
    }

    #[test]
    fn empirical_aggregates_samples_before_ranking() {
        // Category 0 has two samples averaging 3.0 against category 1's
        // single 2.0; brand and shop are shared, contributing 0.5 each.
        let records = vec![rec(1, 0, 0.0, 0, 7, 9), rec(2, 0, 0.0, 1, 7, 9)];
        let history = vec![
            GroupSample { category_id: 0, brand_id: 7, shop_id: 9, j: 1.0 },
            GroupSample { category_id: 0, brand_id: 7, shop_id: 9, j: 5.0 },
            GroupSample { category_id: 1, brand_id: 7, shop_id: 9, j: 2.0 },
        ];
        let scores =
            empirical_scores(&records, &history, EmpiricalWeights::default()).unwrap();
        assert!((scores[&ItemId(1)] - (0.75 + 0.5 + 0.5) / 3.0).abs() < 1e-12);
        assert!((scores[&ItemId(2)] - (0.25 + 0.5 + 0.5) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_returns_wash_out_to_the_midpoint() {
        let records = vec![
            rec(1, 0, 2.0, 0, 0, 0),
            rec(2, 0, 2.0, 0, 1, 1),
            rec(3, 0, 2.0, 1, 0, 1),
        ];
        let scores =
            empirical_scores(&records, &self_history(&records), EmpiricalWeights::default())
                .unwrap();
        for (_, s) in scores {
            assert!((s - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_select_which_hierarchy_matters() {
        let records = vec![
            rec(1, 0, 1.0, 0, 0, 0),
            rec(2, 0, 3.0, 0, 1, 1),
            rec(3, 0, 5.0, 1, 0, 1),
            rec(4, 0, 7.0, 1, 1, 0),
        ];
        let w = EmpiricalWeights {
            category: 1.0,
            brand: 0.0,
            shop: 0.0,
        };
        let scores = empirical_scores(&records, &self_history(&records), w).unwrap();
        assert!((scores[&ItemId(1)] - 0.25).abs() < 1e-12);
        assert!((scores[&ItemId(4)] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn unseen_groups_fall_back_to_the_pooled_percentile() {
        let history = vec![
            GroupSample { category_id: 0, brand_id: 0, shop_id: 0, j: 1.0 },
            GroupSample { category_id: 1, brand_id: 0, shop_id: 0, j: 9.0 },
        ];
        // Category 5 never appears in history; brand and shop are known.
        let records = vec![rec(1, 0, 0.0, 5, 0, 0)];
        let scores =
            empirical_scores(&records, &history, EmpiricalWeights::default()).unwrap();
        assert!((scores[&ItemId(1)] - (0.5 + 0.5 + 0.5) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empirical_scores_stay_strictly_inside_unit_interval() {
        let records: Vec<EvalRecord> = (0..30)
            .map(|i| rec(i, 0, i as f64 * 1.7, i % 5, i % 7, i % 3))
            .collect();
        let scores =
            empirical_scores(&records, &self_history(&records), EmpiricalWeights::default())
                .unwrap();
        for (_, s) in scores {
            assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn empirical_rejects_bad_inputs() {
        let records = vec![rec(1, 0, 1.0, 0, 0, 0), rec(1, 1, 2.0, 2, 0, 0)];
        let history = self_history(&records);
        assert!(empirical_scores(&[], &history, EmpiricalWeights::default()).is_err());
        assert!(empirical_scores(&records, &[], EmpiricalWeights::default()).is_err());
        // Same item flips category between records.
        assert!(empirical_scores(&records, &history, EmpiricalWeights::default()).is_err());
        let consistent = vec![rec(1, 0, 1.0, 0, 0, 0), rec(1, 1, 2.0, 0, 0, 0)];
        let w = EmpiricalWeights {
            category: 0.0,
            brand: 0.0,
            shop: 0.0,
        };
        assert!(empirical_scores(&consistent, &self_history(&consistent), w).is_err());
    }

    #[test]
    fn group_history_collects_only_labeled_steps() {
        let trace = vanilla_trace(19, 3, 9);
        let seqs = training_sequences(&trace, 3, 0.5).unwrap();
        let hist = group_history(&seqs);
        let labeled: usize = seqs.iter().map(|s| s.labeled_steps()).sum();
        assert_eq!(hist.len(), labeled);
        let mut by_item: BTreeMap<ItemId, (u32, u32, u32)> = BTreeMap::new();
        for seq in &seqs {
            let o = &seq.obs[0];
            by_item.insert(seq.item, (o.x_i.category_id, o.x_i.brand_id, o.x_i.shop_id));
        }
        // Every sample carries a group trio some item actually has.
        for s in &hist {
            assert!(by_item
                .values()
                .any(|&t| t == (s.category_id, s.brand_id, s.shop_id)));
        }
    }

    fn small_dims() -> NetDims {
        NetDims {
            content_dim: 4,
            id_embed_dim: 2,
            encoder_out: 3,
            n_categories: 2,
            n_brands: 3,
            n_shops: 3,
            hidden: 3,
            wide_out: 4,
            deep_hidden: 6,
            deep_out: 4,
            critic_hidden: 6,
        }
    }

    fn vanilla_trace(seed: u64, items: usize, days: u32) -> Vec<DayResult> {
        let cfg = SimConfig {
            seed,
            n_categories: 2,
            n_brands: 3,
            n_shops: 3,
            content_dim: 4,
            ..SimConfig::default()
        };
        let mut world = SimWorld::new(cfg, vec![200 * items as u64]).unwrap();
        world.spawn(items, 0).unwrap();
        world.run_vanilla_days(days).unwrap()
    }

    #[test]
    fn labels_cover_exactly_the_days_with_a_full_horizon() {
        let trace = vanilla_trace(11, 3, 12);
        let seqs = training_sequences(&trace, 3, 0.5).unwrap();
        assert_eq!(seqs.len(), 3);
        let mut rewards: BTreeMap<(ItemId, u32), f64> = BTreeMap::new();
        for day in &trace {
            for tr in &day.transitions {
                rewards.insert((tr.item, tr.day), tr.reward);
            }
        }
        let last_day = rewards.keys().map(|(_, d)| *d).max().unwrap();
        for seq in &seqs {
            assert_eq!(seq.obs.len(), seq.labels.len());
            for (i, label) in seq.labels.iter().enumerate() {
                let day = seq.start_day + i as u32;
                match label {
                    Some(j) => {
                        assert!(day + 2 <= last_day);
                        let want = rewards[&(seq.item, day)]
                            + 0.5 * rewards[&(seq.item, day + 1)]
                            + 0.25 * rewards[&(seq.item, day + 2)];
                        assert!((j - want).abs() < 1e-12);
                    }
                    None => assert!(day + 2 > last_day),
                }
            }
        }
    }

    #[test]
    fn slicing_the_trace_removes_labels_that_would_peek_ahead() {
        let trace = vanilla_trace(12, 2, 12);
        let full = training_sequences(&trace, 3, 0.5).unwrap();
        let sliced = training_sequences(&trace[..6], 3, 0.5).unwrap();
        for (f, s) in full.iter().zip(&sliced) {
            assert_eq!(f.item, s.item);
            assert!(s.obs.len() < f.obs.len());
            assert!(s.labeled_steps() < f.labeled_steps());
            // Shared prefix of labels agrees; the slice just ends sooner.
            for (a, b) in f.labels.iter().zip(&s.labels) {
                if b.is_some() {
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn supervised_head_fits_constant_labels() {
        let trace = vanilla_trace(13, 3, 8);
        let mut seqs = training_sequences(&trace, 3, 0.5).unwrap();
        for seq in &mut seqs {
            for l in seq.labels.iter_mut() {
                *l = Some(2.5);
            }
        }
        let mut model = LstmBaseline::new(small_dims(), 0.05, 13).unwrap();
        let summary = model.train(&seqs, 700, 13).unwrap();
        assert!(!summary.diverged);
        assert!(summary.final_loss < 1e-3, "final loss {}", summary.final_loss);
        for seq in &seqs {
            for p in model.predict_sequence(&seq.obs).unwrap() {
                assert!((p - 2.5).abs() < 5e-2, "prediction {p}");
            }
        }
    }

    #[test]
    fn training_is_seed_deterministic() {
        let trace = vanilla_trace(14, 3, 9);
        let seqs = training_sequences(&trace, 3, 0.5).unwrap();
        let mut a = LstmBaseline::new(small_dims(), 0.01, 14).unwrap();
        let mut b = LstmBaseline::new(small_dims(), 0.01, 14).unwrap();
        let sa = a.train(&seqs, 5, 99).unwrap();
        let sb = b.train(&seqs, 5, 99).unwrap();
        assert_eq!(sa, sb);
        let na = a.params.to_named();
        let nb = b.params.to_named();
        assert_eq!(na.len(), nb.len());
        for (ka, ta) in &na {
            let tb = &nb[ka];
            assert_eq!(ta.data.len(), tb.data.len());
            for (x, y) in ta.data.iter().zip(&tb.data) {
                assert_eq!(x.to_bits(), y.to_bits(), "{ka}");
            }
        }
        assert_eq!(a.predictions(&trace).unwrap(), b.predictions(&trace).unwrap());
    }

    #[test]
    fn full_sequence_gradients_match_finite_differences() {
        let trace = vanilla_trace(15, 1, 7);
        let mut seqs = training_sequences(&trace, 3, 0.5).unwrap();
        let mut seq = seqs.remove(0);
        seq.obs.truncate(3);
        seq.labels.truncate(3);
        assert_eq!(seq.labeled_steps(), 3);
        let mut model = LstmBaseline::new(small_dims(), 0.01, 15).unwrap();
        model.ensure_normalizer(std::slice::from_ref(&seq)).unwrap();
        let report = model.check_sequence_gradients(&seq, 1e-4).unwrap();
        assert_eq!(report.elements, model.params.scalar_count());
        assert!(report.passes(1e-4), "worst {} at {}", report.max_rel_err, report.worst);
    }

    #[test]
    fn non_finite_loss_flags_divergence_without_stepping() {
        let trace = vanilla_trace(16, 2, 7);
        let mut seqs = training_sequences(&trace, 3, 0.5).unwrap();
        for seq in &mut seqs {
            for l in seq.labels.iter_mut() {
                if l.is_some() {
                    *l = Some(1e200);
                }
            }
        }
        let mut model = LstmBaseline::new(small_dims(), 0.01, 16).unwrap();
        let before = model.params.to_named();
        let summary = model.train(&seqs, 10, 16).unwrap();
        assert!(summary.diverged);
        assert!(model.diverged());
        assert_eq!(summary.epochs_run, 0);
        let after = model.params.to_named();
        for (k, t) in &before {
            for (x, y) in t.data.iter().zip(&after[k].data) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn unlabeled_training_set_is_rejected() {
        let trace = vanilla_trace(17, 2, 7);
        let mut seqs = training_sequences(&trace, 3, 0.5).unwrap();
        for seq in &mut seqs {
            for l in seq.labels.iter_mut() {
                *l = None;
            }
        }
        let mut model = LstmBaseline::new(small_dims(), 0.01, 17).unwrap();
        assert!(model.train(&seqs, 3, 17).is_err());
    }

    #[test]
    fn predictions_cover_every_observed_item_day() {
        let trace = vanilla_trace(18, 3, 8);
        let model = LstmBaseline::new(small_dims(), 0.01, 18).unwrap();
        let preds = model.predictions(&trace).unwrap();
        let mut expected = 0;
        for day in &trace {
            expected += day.transitions.len();
        }
        assert_eq!(preds.len(), expected);
        for day in &trace {
            for tr in &day.transitions {
                assert!(preds.contains_key(&(tr.item, tr.day)));
            }
        }
    }
}
