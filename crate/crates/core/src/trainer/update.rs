//! Itemwise episodic updates. Each epoch samples a batch of episodes,
//! groups them by length, and walks every group forward in lockstep: at
//! each step the critic regresses onto target-network TD values, the
//! actor ascends the critic's action gradient through the policy head
//! only, and both target copies lag behind via soft updates. Recurrent
//! state is bootstrapped sequentially: the hidden state entering step t
//! is the one produced at step t-1 of this same pass (depth-1 truncation,
//! so gradients do not cross step boundaries, values do).

use std::collections::BTreeMap;

use crate::actor::{actor_head, detached_head_forward, DetachedTrunk};
use crate::critic::critic_head;
use crate::error::{Error, Result};
use crate::exec::map_ordered;
use crate::mdp::formulas::td_target;
use crate::mdp::normalizer::AssembledObs;
use crate::mdp::types::Action;
use crate::nn::{clip_global_norm, Gradients, LstmState, ParamSet, Tape};
use crate::streams::{stream, Tag};
use crate::trainer::agent::Agent;
use crate::trainer::buffer::ReplayBuffer;
use crate::trainer::config::TrainerConfig;
use crate::trunk::{trunk_forward, AblationMode, NetDims, NetIds};

/// Aggregate statistics from one update epoch.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    /// Mean squared TD error over every (episode, step) pair.
    pub critic_loss: f64,
    /// Mean critic value at the policy's own action.
    pub actor_obj: f64,
    /// Lockstep steps executed (one critic + one actor update each).
    pub td_steps: u64,
    /// Soft updates applied to the target copy.
    pub soft_updates: u64,
    pub sampled_episodes: usize,
    pub underfilled: bool,
    /// Order-sensitive digest of every hidden state used by the updates;
    /// pins the bootstrapped-sequential carry.
    pub lineage_hash: u64,
}

/// Forward the trunk once and return the post-step recurrent state.
pub fn trunk_state(
    params: &ParamSet,
    ids: &NetIds,
    dims: &NetDims,
    obs: &AssembledObs,
    prev: &LstmState,
    ablation: AblationMode,
) -> Result<LstmState> {
    let mut tape = Tape::new(params);
    let trunk = trunk_forward(&mut tape, ids, dims, obs, prev, ablation)?;
    Ok(LstmState {
        h: tape.value(trunk.h).to_vec(),
        c: tape.value(trunk.c).to_vec(),
    })
}

/// Target-network evaluation at `obs` under the target policy; returns
/// the target Q and the advanced target-side recurrent state.
fn target_eval(
    targets: &ParamSet,
    ids: &NetIds,
    dims: &NetDims,
    obs: &AssembledObs,
    prev: &LstmState,
    ablation: AblationMode,
    freeze_price: bool,
) -> Result<(f64, LstmState)> {
    let mut tape = Tape::new(targets);
    let trunk = trunk_forward(&mut tape, ids, dims, obs, prev, ablation)?;
    let head = actor_head(&mut tape, ids, trunk.o_e, trunk.h, trunk.x_e)?;
    let action_node = if freeze_price {
        let one = tape.leaf(&[1.0]);
        tape.concat(&[head.y_rl, one])
    } else {
        head.action
    };
    let ch = critic_head(
        &mut tape, ids, trunk.s, trunk.x_t, trunk.o_e, trunk.h, action_node,
    )?;
    let q = tape.scalar(ch.q);
    let state = LstmState {
        h: tape.value(trunk.h).to_vec(),
        c: tape.value(trunk.c).to_vec(),
    };
    Ok((q, state))
}

/// Per-element result of one lockstep update step.
struct ElemOut {
    critic_grads: Gradients,
    actor_grads: Gradients,
    sq_err: f64,
    q_pi: f64,
    on_next: LstmState,
    tg_next: LstmState,
}

#[allow(clippy::too_many_arguments)]
fn element_step(
    params: &ParamSet,
    targets: &ParamSet,
    ids: &NetIds,
    dims: &NetDims,
    ablation: AblationMode,
    freeze_price: bool,
    gamma: f64,
    obs: &AssembledObs,
    next_obs: &AssembledObs,
    action: &Action,
    reward: f64,
    terminal: bool,
    on_prev: &LstmState,
    tg_prev: &LstmState,
) -> Result<ElemOut> {
    // TD value from the lagged copies, recurrence carried on their side.
    let (q_next, tg_next) =
        target_eval(targets, ids, dims, next_obs, tg_prev, ablation, freeze_price)?;
    let y = td_target(reward, gamma, q_next, terminal);

    // Critic regression pass at the stored behavior action. Gradients
    // reach the critic heads and the shared trunk.
    let mut t1 = Tape::new(params);
    let trunk1 = trunk_forward(&mut t1, ids, dims, obs, on_prev, ablation)?;
    let a_leaf = t1.leaf(&action.to_vec());
    let ch1 = critic_head(
        &mut t1, ids, trunk1.s, trunk1.x_t, trunk1.o_e, trunk1.h, a_leaf,
    )?;
    let q_pred = t1.scalar(ch1.q);
    let on_next = LstmState {
        h: t1.value(trunk1.h).to_vec(),
        c: t1.value(trunk1.c).to_vec(),
    };
    let bp1 = t1.backward(ch1.q, &[2.0 * (q_pred - y)])?;

    // Action gradient of the critic at the policy's own action.
    let mut t2 = Tape::new(params);
    let trunk2 = trunk_forward(&mut t2, ids, dims, obs, on_prev, ablation)?;
    let head2 = actor_head(&mut t2, ids, trunk2.o_e, trunk2.h, trunk2.x_e)?;
    let pi_action = [
        t2.scalar(head2.y_rl),
        if freeze_price { 1.0 } else { t2.scalar(head2.price) },
    ];
    let detached = DetachedTrunk::capture(&t2, &trunk2);
    let a_watch = t2.watched_leaf(&pi_action);
    let ch2 = critic_head(
        &mut t2, ids, trunk2.s, trunk2.x_t, trunk2.o_e, trunk2.h, a_watch,
    )?;
    let q_pi = t2.scalar(ch2.q);
    let bp2 = t2.backward(ch2.q, &[1.0])?;
    let g_a = bp2
        .watched(a_watch)
        .ok_or_else(|| Error::numeric("missing action gradient"))?
        .to_vec();

    // Policy ascent through the head only: the trunk enters as detached
    // leaves, so its parameters receive no actor gradient.
    let (mut t3, head3) = detached_head_forward(params, ids, &detached)?;
    let bp3 = if freeze_price {
        t3.backward(head3.y_rl, &[-g_a[0]])?
    } else {
        t3.backward(head3.action, &[-g_a[0], -g_a[1]])?
    };

    Ok(ElemOut {
        critic_grads: bp1.grads,
        actor_grads: bp3.grads,
        sq_err: (q_pred - y) * (q_pred - y),
        q_pi,
        on_next,
        tg_next,
    })
}

fn fold_state(hash: &mut u64, state: &LstmState) {
    for v in state.h.iter().chain(&state.c) {
        *hash = (*hash ^ v.to_bits()).wrapping_mul(0x0000_0100_0000_01B3);
    }
}

/// One update epoch over a sampled batch of episodes.
pub fn update_epoch(
    buffer: &ReplayBuffer,
    agent: &mut Agent,
    cfg: &TrainerConfig,
    session: u64,
    epoch: u64,
) -> Result<EpochStats> {
    cfg.validate()?;
    if buffer.is_empty() {
        return Err(Error::domain("update_epoch: replay buffer is empty"));
    }
    let mut rng = stream(cfg.seed, Tag::BatchSample, &[session, epoch]);
    let picked = buffer.sample_indices(cfg.batch_episodes, &mut rng);
    let underfilled = buffer.len() < cfg.batch_episodes;
    if underfilled {
        eprintln!(
            "warning: replay buffer holds {} episodes, batch wants {}; training on what exists",
            buffer.len(),
            cfg.batch_episodes
        );
    }

    // Group sampled episodes by length so each group advances in lockstep.
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for idx in picked.iter().copied() {
        let len = buffer.get(idx).expect("sampled index").len();
        if len > 0 {
            groups.entry(len).or_default().push(idx);
        }
    }

    let mut stats = EpochStats {
        critic_loss: 0.0,
        actor_obj: 0.0,
        td_steps: 0,
        soft_updates: 0,
        sampled_episodes: picked.len(),
        underfilled,
        lineage_hash: 0xcbf2_9ce4_8422_2325,
    };
    let mut sq_sum = 0.0;
    let mut q_sum = 0.0;
    let mut elem_steps = 0u64;

    let ids = agent.ids;
    let dims = agent.dims;
    let ablation = agent.ablation;
    let freeze_price = agent.freeze_price;

    for (len, idxs) in groups {
        // Assemble observations once per episode; carry two recurrent
        // lineages per element (online and target side).
        struct Elem {
            obs: Vec<AssembledObs>,
            next: Vec<AssembledObs>,
            actions: Vec<Action>,
            rewards: Vec<f64>,
            terminals: Vec<bool>,
            on: LstmState,
            tg: LstmState,
        }
        let mut elems: Vec<Elem> = Vec::with_capacity(idxs.len());
        for idx in &idxs {
            let ep = buffer.get(*idx).expect("sampled index");
            let mut obs = Vec::with_capacity(len);
            let mut next = Vec::with_capacity(len);
            let mut actions = Vec::with_capacity(len);
            let mut rewards = Vec::with_capacity(len);
            let mut terminals = Vec::with_capacity(len);
            for tr in &ep.transitions {
                obs.push(agent.assemble(&tr.obs)?);
                next.push(agent.assemble(&tr.next_obs)?);
                actions.push(tr.action);
                rewards.push(tr.reward);
                terminals.push(tr.terminal);
            }
            let zero = agent.zero_state();
            let tg = trunk_state(&agent.targets, &ids, &dims, &obs[0], &zero, ablation)?;
            elems.push(Elem {
                obs,
                next,
                actions,
                rewards,
                terminals,
                on: zero,
                tg,
            });
        }

        for t in 0..len {
            let work: Vec<(usize, &Elem)> = elems.iter().enumerate().collect();
            let gamma = cfg.gamma;
            let outs: Vec<Result<ElemOut>> = {
                let params: &ParamSet = &agent.params;
                let targets: &ParamSet = &agent.targets;
                map_ordered(&work, |(_, e)| {
                    element_step(
                        params,
                        targets,
                        &ids,
                        &dims,
                        ablation,
                        freeze_price,
                        gamma,
                        &e.obs[t],
                        &e.next[t],
                        &e.actions[t],
                        e.rewards[t],
                        e.terminals[t],
                        &e.on,
                        &e.tg,
                    )
                })
            };

            let n = elems.len() as f64;
            let mut critic_acc = Gradients::new();
            let mut actor_acc = Gradients::new();
            for (slot, out) in outs.into_iter().enumerate() {
                let out = out?;
                critic_acc.add_assign(&out.critic_grads);
                actor_acc.add_assign(&out.actor_grads);
                sq_sum += out.sq_err;
                q_sum += out.q_pi;
                elem_steps += 1;
                fold_state(&mut stats.lineage_hash, &elems[slot].on);
                elems[slot].on = out.on_next;
                elems[slot].tg = out.tg_next;
            }
            critic_acc.scale(1.0 / n);
            actor_acc.scale(1.0 / n);
            clip_global_norm(&mut critic_acc, cfg.clip_norm);
            clip_global_norm(&mut actor_acc, cfg.clip_norm);
            agent.critic_adam.step(&mut agent.params, &critic_acc)?;
            agent.actor_adam.step(&mut agent.params, &actor_acc)?;
            if cfg.tau > 0.0 {
                agent.targets.soft_update_from(&agent.params, cfg.tau)?;
                stats.soft_updates += 1;
            }
            stats.td_steps += 1;
        }
    }

    if elem_steps > 0 {
        stats.critic_loss = sq_sum / elem_steps as f64;
        stats.actor_obj = q_sum / elem_steps as f64;
    }
    if !stats.critic_loss.is_finite() || !agent.params.all_finite() {
        return Err(Error::numeric("update_epoch: non-finite loss or parameters"));
    }
    Ok(stats)
}
