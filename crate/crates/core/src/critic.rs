//! The action-value head: a dueling decomposition with a trend bias,
//! Q(o, a, h) = V(o_e, h) + A(s, a) + Bias(s, x_t, a).
//!
//! V and A use two relu hidden layers; Bias is a single linear layer, so
//! the trend contribution to Q stays interpretable. No max-advantage
//! normalization is applied: the decomposition is a plain sum as
//! specified, at the cost of V/A identifiability.

use crate::error::Result;
use crate::mdp::normalizer::AssembledObs;
use crate::mdp::types::Action;
pub use crate::mdp::formulas::td_target;
use crate::nn::{dense, ActKind, LstmState, NodeId, ParamSet, Tape};
use crate::trunk::{trunk_forward, AblationMode, NetDims, NetIds, TrunkOut};

/// Tape nodes for one critic evaluation.
pub struct CriticHead {
    pub v: NodeId,
    pub a: NodeId,
    pub bias: NodeId,
    pub q: NodeId,
}

/// Build Q on top of trunk nodes and an action node (watched when the
/// caller needs dQ/da).
pub fn critic_head(
    tape: &mut Tape<'_>,
    ids: &NetIds,
    trunk_s: NodeId,
    trunk_x_t: NodeId,
    o_e: NodeId,
    h: NodeId,
    action: NodeId,
) -> Result<CriticHead> {
    let v_in = tape.concat(&[o_e, h]);
    let v1 = dense(tape, ids.v_w1, ids.v_b1, v_in, ActKind::Relu)?;
    let v2 = dense(tape, ids.v_w2, ids.v_b2, v1, ActKind::Relu)?;
    let v = dense(tape, ids.v_w3, ids.v_b3, v2, ActKind::Identity)?;

    let a_in = tape.concat(&[trunk_s, action]);
    let a1 = dense(tape, ids.a_w1, ids.a_b1, a_in, ActKind::Relu)?;
    let a2 = dense(tape, ids.a_w2, ids.a_b2, a1, ActKind::Relu)?;
    let a = dense(tape, ids.a_w3, ids.a_b3, a2, ActKind::Identity)?;

    let bias_in = tape.concat(&[trunk_s, trunk_x_t, action]);
    let bias = dense(tape, ids.bias_w, ids.bias_b, bias_in, ActKind::Identity)?;

    let va = tape.add(v, a)?;
    let q = tape.add(va, bias)?;
    Ok(CriticHead { v, a, bias, q })
}

/// Value pieces from one critic evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QValue {
    pub q: f64,
    pub v: f64,
    pub a: f64,
    pub bias: f64,
    pub state: StateCarry,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateCarry;

/// Plain Q evaluation: trunk + critic head, no gradients kept. Returns
/// the post-step LSTM state alongside the decomposition so target-network
/// sweeps can carry recurrence forward.
pub fn q_value(
    params: &ParamSet,
    ids: &NetIds,
    dims: &NetDims,
    obs: &AssembledObs,
    prev: &LstmState,
    action: &Action,
    ablation: AblationMode,
) -> Result<(QValue, LstmState)> {
    let mut tape = Tape::new(params);
    let trunk: TrunkOut = trunk_forward(&mut tape, ids, dims, obs, prev, ablation)?;
    let act_leaf = tape.leaf(&action.to_vec());
    let head = critic_head(
        &mut tape, ids, trunk.s, trunk.x_t, trunk.o_e, trunk.h, act_leaf,
    )?;
    let out = QValue {
        q: tape.scalar(head.q),
        v: tape.scalar(head.v),
        a: tape.scalar(head.a),
        bias: tape.scalar(head.bias),
        state: StateCarry,
    };
    let next = LstmState {
        h: tape.value(trunk.h).to_vec(),
        c: tape.value(trunk.c).to_vec(),
    };
    Ok((out, next))
}
