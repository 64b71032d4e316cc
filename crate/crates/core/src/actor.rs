//! The policy head: wide-and-deep trunk over the encoded observation and
//! recurrent state, a softmax attention vector S, and the dot-product
//! scoring y_rl = sigmoid(x_e . S). The price head mirrors the structure
//! with its own attention matrix.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::mdp::normalizer::AssembledObs;
use crate::mdp::types::Action;
use crate::nn::{dense, sigmoid, ActKind, LstmState, NodeId, ParamSet, Tape};
use crate::trunk::{trunk_forward, AblationMode, NetDims, NetIds, TrunkOut};

/// Tape nodes for one policy evaluation.
pub struct ActorHead {
    pub score_dist: NodeId,
    pub y_logit: NodeId,
    pub y_rl: NodeId,
    pub price_logit: NodeId,
    pub price: NodeId,
    /// [y_rl, price] as one node, the action vector a = pi(o).
    pub action: NodeId,
}

/// Build the policy head on top of trunk outputs. Pass trunk node handles
/// from the same tape; gradient stopping at the shared boundary is done by
/// the caller re-feeding trunk values as leaves on a fresh tape.
pub fn actor_head(
    tape: &mut Tape<'_>,
    ids: &NetIds,
    o_e: NodeId,
    h: NodeId,
    x_e: NodeId,
) -> Result<ActorHead> {
    let o_wide = dense(tape, ids.wide_w, ids.wide_b, o_e, ActKind::Identity)?;
    let deep_in = tape.concat(&[o_e, h]);
    let d1 = dense(tape, ids.deep_w1, ids.deep_b1, deep_in, ActKind::Relu)?;
    let d2 = dense(tape, ids.deep_w2, ids.deep_b2, d1, ActKind::Relu)?;
    let o_deep = dense(tape, ids.deep_w3, ids.deep_b3, d2, ActKind::Identity)?;
    let joint = tape.concat(&[o_deep, o_wide]);

    let score_logits = tape.matvec(ids.score_w, joint)?;
    let score_dist = tape.softmax(score_logits);
    let y_logit = tape.dot(x_e, score_dist)?;
    let y_rl = tape.activation(y_logit, ActKind::Sigmoid);

    let price_logits = tape.matvec(ids.price_w, joint)?;
    let price_dist = tape.softmax(price_logits);
    let price_logit = tape.dot(x_e, price_dist)?;
    let price = tape.activation(price_logit, ActKind::Sigmoid);

    let action = tape.concat(&[y_rl, price]);
    Ok(ActorHead {
        score_dist,
        y_logit,
        y_rl,
        price_logit,
        price,
        action,
    })
}

/// Plain values from one policy step.
#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    pub action: Action,
    pub state: LstmState,
    pub y_logit: f64,
    pub price_logit: f64,
}

/// One inference step: trunk + policy head, no gradients kept.
///
/// With `freeze_price` the price head is ignored and the returned action
/// carries price ratio 1.0 (no discounting), matching deployments where
/// pricing is not under the agent's control.
pub fn act(
    params: &ParamSet,
    ids: &NetIds,
    dims: &NetDims,
    obs: &AssembledObs,
    prev: &LstmState,
    ablation: AblationMode,
    freeze_price: bool,
) -> Result<ActOutput> {
    let mut tape = Tape::new(params);
    let trunk = trunk_forward(&mut tape, ids, dims, obs, prev, ablation)?;
    let head = actor_head(&mut tape, ids, trunk.o_e, trunk.h, trunk.x_e)?;
    let y_rl = tape.scalar(head.y_rl);
    let (price, price_logit) = if freeze_price {
        (1.0, f64::INFINITY)
    } else {
        (tape.scalar(head.price), tape.scalar(head.price_logit))
    };
    Ok(ActOutput {
        action: Action::new(y_rl, price)?,
        state: LstmState {
            h: tape.value(trunk.h).to_vec(),
            c: tape.value(trunk.c).to_vec(),
        },
        y_logit: tape.scalar(head.y_logit),
        price_logit,
    })
}

/// Re-run only the head over detached trunk values; used by the policy
/// update so head gradients exist while trunk parameters stay out of
/// reach.
pub fn detached_head_forward<'p>(
    params: &'p ParamSet,
    ids: &NetIds,
    trunk_vals: &DetachedTrunk,
) -> Result<(Tape<'p>, ActorHead)> {
    let mut tape = Tape::new(params);
    let o_e = tape.leaf(&trunk_vals.o_e);
    let h = tape.leaf(&trunk_vals.h);
    let x_e = tape.leaf(&trunk_vals.x_e);
    let head = actor_head(&mut tape, ids, o_e, h, x_e)?;
    Ok((tape, head))
}

/// Trunk outputs captured as plain values.
#[derive(Debug, Clone)]
pub struct DetachedTrunk {
    pub s: Vec<f64>,
    pub x_t: Vec<f64>,
    pub x_e: Vec<f64>,
    pub o_e: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl DetachedTrunk {
    pub fn capture(tape: &Tape<'_>, t: &TrunkOut) -> Self {
        DetachedTrunk {
            s: tape.value(t.s).to_vec(),
            x_t: tape.value(t.x_t).to_vec(),
            x_e: tape.value(t.x_e).to_vec(),
            o_e: tape.value(t.o_e).to_vec(),
            h: tape.value(t.h).to_vec(),
            c: tape.value(t.c).to_vec(),
        }
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Gaussian exploration in logit space: perturb the pre-sigmoid scores and
/// squash back, so the perturbed action stays strictly inside its bounds.
/// `noise_scale` of zero returns the action untouched (bit-identical).
pub fn explore(action: &Action, noise_scale: f64, rng: &mut impl Rng) -> Action {
    if noise_scale == 0.0 {
        return *action;
    }
    let normal = Normal::new(0.0, noise_scale).expect("finite noise scale");
    let y = sigmoid(logit(action.y_rl) + normal.sample(rng));
    let price = if action.price >= 1.0 {
        1.0
    } else {
        sigmoid(logit(action.price) + normal.sample(rng))
    };
    Action { y_rl: y, price }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::types::NUMERIC_DIM;
    use crate::streams::{stream, Tag};

    fn nets(seed: u64) -> (ParamSet, NetIds, NetDims) {
        let dims = NetDims {
            content_dim: 3,
            id_embed_dim: 2,
            encoder_out: 2,
            n_categories: 3,
            n_brands: 4,
            n_shops: 5,
            hidden: 2,
            wide_out: 3,
            deep_hidden: 4,
            deep_out: 3,
            critic_hidden: 4,
        };
        let mut rng = stream(seed, Tag::ParamInit, &[0]);
        let mut params = ParamSet::new();
        let ids = NetIds::register(&mut params, &dims, &mut rng).unwrap();
        (params, ids, dims)
    }

    fn obs(seed: f64) -> AssembledObs {
        let mut numeric = [0.0; NUMERIC_DIM];
        for (j, v) in numeric.iter_mut().enumerate() {
            *v = seed - j as f64 * 0.02;
        }
        AssembledObs {
            numeric,
            content: vec![0.5, -0.25, 0.75],
            category_id: 1,
            brand_id: 2,
            shop_id: 3,
        }
    }

    #[test]
    fn score_vector_is_a_distribution() {
        let (params, ids, dims) = nets(7);
        let mut tape = Tape::new(&params);
        let trunk = trunk_forward(
            &mut tape,
            &ids,
            &dims,
            &obs(0.4),
            &LstmState::zeros(dims.hidden),
            AblationMode::Full,
        )
        .unwrap();
        let head = actor_head(&mut tape, &ids, trunk.o_e, trunk.h, trunk.x_e).unwrap();
        let s = tape.value(head.score_dist);
        assert_eq!(s.len(), dims.x_e_dim());
        assert!(s.iter().all(|&v| v >= 0.0));
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_x_e_scores_one_half() {
        let (params, ids, dims) = nets(8);
        let mut tape = Tape::new(&params);
        let o_e = tape.leaf(&vec![0.1; dims.o_e_dim()]);
        let h = tape.leaf(&vec![0.0; dims.hidden]);
        let x_e = tape.leaf(&vec![0.0; dims.x_e_dim()]);
        let head = actor_head(&mut tape, &ids, o_e, h, x_e).unwrap();
        assert_eq!(tape.scalar(head.y_rl), 0.5);
    }

    #[test]
    fn action_stays_in_bounds() {
        let (params, ids, dims) = nets(9);
        for k in 0..20 {
            let out = act(
                &params,
                &ids,
                &dims,
                &obs(k as f64 * 0.3 - 2.0),
                &LstmState::zeros(dims.hidden),
                AblationMode::Full,
                false,
            )
            .unwrap();
            assert!(out.action.y_rl > 0.0 && out.action.y_rl < 1.0);
            assert!(out.action.price > 0.0 && out.action.price <= 1.0);
        }
    }

    #[test]
    fn recurrence_is_serialization_transparent() {
        let (params, ids, dims) = nets(10);
        let steps: Vec<AssembledObs> = (0..5).map(|k| obs(k as f64 * 0.2)).collect();

        let straight = {
            let mut state = LstmState::zeros(dims.hidden);
            let mut outs = Vec::new();
            for o in &steps {
                let r = act(&params, &ids, &dims, o, &state, AblationMode::Full, false).unwrap();
                state = r.state.clone();
                outs.push(r.action);
            }
            outs
        };

        // Save/restore the state between steps 2 and 3.
        let restored = {
            let mut state = LstmState::zeros(dims.hidden);
            let mut outs = Vec::new();
            for (i, o) in steps.iter().enumerate() {
                if i == 3 {
                    let snapshot = state.clone();
                    state = snapshot;
                }
                let r = act(&params, &ids, &dims, o, &state, AblationMode::Full, false).unwrap();
                state = r.state.clone();
                outs.push(r.action);
            }
            outs
        };
        assert_eq!(straight, restored);
    }

    #[test]
    fn freeze_price_pins_ratio_at_one() {
        let (params, ids, dims) = nets(11);
        let out = act(
            &params,
            &ids,
            &dims,
            &obs(0.2),
            &LstmState::zeros(dims.hidden),
            AblationMode::Full,
            true,
        )
        .unwrap();
        assert_eq!(out.action.price, 1.0);
    }

    #[test]
    fn zero_noise_explore_is_identity() {
        let a = Action::new(0.37, 0.81).unwrap();
        let mut rng = stream(1, Tag::Exploration, &[0]);
        let b = explore(&a, 0.0, &mut rng);
        assert_eq!(a, b);
    }

    #[test]
    fn explored_actions_stay_in_bounds() {
        let a = Action::new(0.95, 0.99).unwrap();
        let mut rng = stream(2, Tag::Exploration, &[0]);
        for _ in 0..5000 {
            let b = explore(&a, 2.0, &mut rng);
            assert!(b.y_rl > 0.0 && b.y_rl < 1.0);
            assert!(b.price > 0.0 && b.price <= 1.0);
        }
    }

    #[test]
    fn small_noise_std_matches_delta_method() {
        let a = Action::new(0.3, 0.9).unwrap();
        let sigma = 0.01;
        let mut rng = stream(3, Tag::Exploration, &[0]);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let y = explore(&a, sigma, &mut rng).y_rl;
            sum += y;
            sum2 += y * y;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        let want = sigma * a.y_rl * (1.0 - a.y_rl);
        let got = var.sqrt();
        assert!(
            (got - want).abs() / want < 0.05,
            "std {got} vs delta-method {want}"
        );
    }

    #[test]
    fn frozen_price_survives_exploration() {
        let a = Action::new(0.5, 1.0).unwrap();
        let mut rng = stream(4, Tag::Exploration, &[0]);
        for _ in 0..100 {
            assert_eq!(explore(&a, 0.5, &mut rng).price, 1.0);
        }
    }
}
