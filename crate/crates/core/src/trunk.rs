//! The representation trunk shared by the actor and the critic: ID
//! embedding tables, the inherent-feature encoder, and the LSTM.
//!
//! One `ParamSet` holds every tensor of both networks, so "the critic
//! shares the encoder and LSTM with the actor" is literal: the heads
//! reference the same `ParamId`s. Target networks are clones of the whole
//! set and inherit the ids.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::normalizer::AssembledObs;
use crate::mdp::types::{NOMINAL_DIM, NUMERIC_DIM, TREND_DIM};
use crate::nn::{dense, lstm_step, ActKind, LstmIds, LstmState, NodeId, ParamId, ParamSet, Tape};

/// Component knockouts for the ablation study. `NoInherent` blanks the
/// content embedding and routes every id to the unknown row; `NoTrend`
/// zeroes the trend block for every consumer, which makes all outputs
/// exactly independent of x_t; `NoRecurrent` pins the LSTM state at zero,
/// removing history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum AblationMode {
    #[default]
    Full,
    NoInherent,
    NoTrend,
    NoRecurrent,
}

impl AblationMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(AblationMode::Full),
            "no_x_i" => Ok(AblationMode::NoInherent),
            "no_x_t" => Ok(AblationMode::NoTrend),
            "no_r" => Ok(AblationMode::NoRecurrent),
            other => Err(Error::config(format!(
                "unknown ablation `{other}` (full, no_x_i, no_x_t, no_r)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::NoInherent => "no_x_i",
            AblationMode::NoTrend => "no_x_t",
            AblationMode::NoRecurrent => "no_r",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub content_dim: usize,
    pub id_embed_dim: usize,
    pub encoder_out: usize,
    pub n_categories: usize,
    pub n_brands: usize,
    pub n_shops: usize,
    pub hidden: usize,
    pub wide_out: usize,
    pub deep_hidden: usize,
    pub deep_out: usize,
    pub critic_hidden: usize,
}

impl Default for NetDims {
    fn default() -> Self {
        NetDims {
            content_dim: 16,
            id_embed_dim: 8,
            encoder_out: 8,
            n_categories: 8,
            n_brands: 24,
            n_shops: 40,
            hidden: 4,
            wide_out: 16,
            deep_hidden: 32,
            deep_out: 16,
            critic_hidden: 32,
        }
    }
}

impl NetDims {
    /// Encoded inherent features: content embedding plus encoder output.
    pub fn x_e_dim(&self) -> usize {
        self.content_dim + self.encoder_out
    }

    /// Encoded observation: numeric block plus x_e.
    pub fn o_e_dim(&self) -> usize {
        NUMERIC_DIM + self.x_e_dim()
    }

    /// Joint trunk head input: [o_deep, o_wide].
    pub fn head_in_dim(&self) -> usize {
        self.deep_out + self.wide_out
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.content_dim,
            self.id_embed_dim,
            self.encoder_out,
            self.n_categories,
            self.n_brands,
            self.n_shops,
            self.hidden,
            self.wide_out,
            self.deep_hidden,
            self.deep_out,
            self.critic_hidden,
        ];
        if all.iter().any(|&d| d == 0) {
            return Err(Error::config("network dimension of zero"));
        }
        Ok(())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        vec![
            self.content_dim as f64,
            self.id_embed_dim as f64,
            self.encoder_out as f64,
            self.n_categories as f64,
            self.n_brands as f64,
            self.n_shops as f64,
            self.hidden as f64,
            self.wide_out as f64,
            self.deep_hidden as f64,
            self.deep_out as f64,
            self.critic_hidden as f64,
        ]
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != 11 {
            return Err(Error::format(format!("net dims payload length {}", flat.len())));
        }
        let d = NetDims {
            content_dim: flat[0] as usize,
            id_embed_dim: flat[1] as usize,
            encoder_out: flat[2] as usize,
            n_categories: flat[3] as usize,
            n_brands: flat[4] as usize,
            n_shops: flat[5] as usize,
            hidden: flat[6] as usize,
            wide_out: flat[7] as usize,
            deep_hidden: flat[8] as usize,
            deep_out: flat[9] as usize,
            critic_hidden: flat[10] as usize,
        };
        d.validate()?;
        Ok(d)
    }
}

/// Every tensor of the joint actor-critic, grouped by role.
#[derive(Debug, Clone, Copy)]
pub struct NetIds {
    // shared trunk
    pub cat_table: ParamId,
    pub brand_table: ParamId,
    pub shop_table: ParamId,
    pub enc_w: ParamId,
    pub enc_b: ParamId,
    pub lstm: LstmIds,
    // actor head
    pub wide_w: ParamId,
    pub wide_b: ParamId,
    pub deep_w1: ParamId,
    pub deep_b1: ParamId,
    pub deep_w2: ParamId,
    pub deep_b2: ParamId,
    pub deep_w3: ParamId,
    pub deep_b3: ParamId,
    pub score_w: ParamId,
    pub price_w: ParamId,
    // critic heads
    pub v_w1: ParamId,
    pub v_b1: ParamId,
    pub v_w2: ParamId,
    pub v_b2: ParamId,
    pub v_w3: ParamId,
    pub v_b3: ParamId,
    pub a_w1: ParamId,
    pub a_b1: ParamId,
    pub a_w2: ParamId,
    pub a_b2: ParamId,
    pub a_w3: ParamId,
    pub a_b3: ParamId,
    pub bias_w: ParamId,
    pub bias_b: ParamId,
}

impl NetIds {
    /// Registers the full joint network into `params`.
    pub fn register(params: &mut ParamSet, dims: &NetDims, rng: &mut impl Rng) -> Result<Self> {
        dims.validate()?;
        let d = dims;
        let x_e = d.x_e_dim();
        let o_e = d.o_e_dim();
        let action_dim = 2;

        // Embedding tables stored transposed (dim x rows) so a one-hot
        // matvec selects a column; column 0 is the unknown id.
        let cat_table =
            params.add_matrix("trunk.cat_table", d.id_embed_dim, d.n_categories + 1, rng)?;
        let brand_table =
            params.add_matrix("trunk.brand_table", d.id_embed_dim, d.n_brands + 1, rng)?;
        let shop_table =
            params.add_matrix("trunk.shop_table", d.id_embed_dim, d.n_shops + 1, rng)?;
        let enc_w = params.add_matrix("trunk.enc_w", d.encoder_out, 3 * d.id_embed_dim, rng)?;
        let enc_b = params.add_vector("trunk.enc_b", d.encoder_out, 0.0)?;
        let lstm = LstmIds::register(params, "trunk.lstm", o_e, d.hidden, rng)?;

        let wide_w = params.add_matrix("actor.wide_w", d.wide_out, o_e, rng)?;
        let wide_b = params.add_vector("actor.wide_b", d.wide_out, 0.0)?;
        let deep_in = o_e + d.hidden;
        let deep_w1 = params.add_matrix("actor.deep_w1", d.deep_hidden, deep_in, rng)?;
        let deep_b1 = params.add_vector("actor.deep_b1", d.deep_hidden, 0.0)?;
        let deep_w2 = params.add_matrix("actor.deep_w2", d.deep_hidden, d.deep_hidden, rng)?;
        let deep_b2 = params.add_vector("actor.deep_b2", d.deep_hidden, 0.0)?;
        let deep_w3 = params.add_matrix("actor.deep_w3", d.deep_out, d.deep_hidden, rng)?;
        let deep_b3 = params.add_vector("actor.deep_b3", d.deep_out, 0.0)?;
        let score_w = params.add_matrix("actor.score_w", x_e, d.head_in_dim(), rng)?;
        let price_w = params.add_matrix("actor.price_w", x_e, d.head_in_dim(), rng)?;

        let v_in = o_e + d.hidden;
        let v_w1 = params.add_matrix("critic.v_w1", d.critic_hidden, v_in, rng)?;
        let v_b1 = params.add_vector("critic.v_b1", d.critic_hidden, 0.0)?;
        let v_w2 = params.add_matrix("critic.v_w2", d.critic_hidden, d.critic_hidden, rng)?;
        let v_b2 = params.add_vector("critic.v_b2", d.critic_hidden, 0.0)?;
        let v_w3 = params.add_matrix("critic.v_w3", 1, d.critic_hidden, rng)?;
        let v_b3 = params.add_vector("critic.v_b3", 1, 0.0)?;
        let a_in = NOMINAL_DIM + action_dim;
        let a_w1 = params.add_matrix("critic.a_w1", d.critic_hidden, a_in, rng)?;
        let a_b1 = params.add_vector("critic.a_b1", d.critic_hidden, 0.0)?;
        let a_w2 = params.add_matrix("critic.a_w2", d.critic_hidden, d.critic_hidden, rng)?;
        let a_b2 = params.add_vector("critic.a_b2", d.critic_hidden, 0.0)?;
        let a_w3 = params.add_matrix("critic.a_w3", 1, d.critic_hidden, rng)?;
        let a_b3 = params.add_vector("critic.a_b3", 1, 0.0)?;
        let bias_in = NOMINAL_DIM + TREND_DIM + action_dim;
        let bias_w = params.add_matrix("critic.bias_w", 1, bias_in, rng)?;
        let bias_b = params.add_vector("critic.bias_b", 1, 0.0)?;

        Ok(NetIds {
            cat_table,
            brand_table,
            shop_table,
            enc_w,
            enc_b,
            lstm,
            wide_w,
            wide_b,
            deep_w1,
            deep_b1,
            deep_w2,
            deep_b2,
            deep_w3,
            deep_b3,
            score_w,
            price_w,
            v_w1,
            v_b1,
            v_w2,
            v_b2,
            v_w3,
            v_b3,
            a_w1,
            a_b1,
            a_w2,
            a_b2,
            a_w3,
            a_b3,
            bias_w,
            bias_b,
        })
    }

    /// Optimizer group for the critic update: shared trunk plus both
    /// critic sub-networks. The policy gradient never touches these.
    pub fn critic_group(&self) -> Vec<ParamId> {
        let mut g = self.trunk_group();
        g.extend([
            self.v_w1, self.v_b1, self.v_w2, self.v_b2, self.v_w3, self.v_b3, self.a_w1,
            self.a_b1, self.a_w2, self.a_b2, self.a_w3, self.a_b3, self.bias_w, self.bias_b,
        ]);
        g
    }

    /// Optimizer group for the actor update: heads only, trunk excluded.
    pub fn actor_group(&self) -> Vec<ParamId> {
        vec![
            self.wide_w,
            self.wide_b,
            self.deep_w1,
            self.deep_b1,
            self.deep_w2,
            self.deep_b2,
            self.deep_w3,
            self.deep_b3,
            self.score_w,
            self.price_w,
        ]
    }

    pub fn trunk_group(&self) -> Vec<ParamId> {
        vec![
            self.cat_table,
            self.brand_table,
            self.shop_table,
            self.enc_w,
            self.enc_b,
            self.lstm.w_f,
            self.lstm.w_u,
            self.lstm.w_o,
            self.lstm.w_c,
            self.lstm.b_f,
            self.lstm.b_u,
            self.lstm.b_o,
            self.lstm.b_c,
        ]
    }
}

/// Tape nodes produced by one trunk pass at a single time step.
pub struct TrunkOut {
    /// Nominal-state block of the (normalized) numeric features.
    pub s: NodeId,
    /// Trend block, zeroed under `NoTrend`.
    pub x_t: NodeId,
    /// Encoded inherent features [content, f_e(ids)].
    pub x_e: NodeId,
    /// Encoded observation [s, x_t, x_e].
    pub o_e: NodeId,
    pub h: NodeId,
    pub c: NodeId,
}

fn one_hot(len: usize, idx: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[idx] = 1.0;
    v
}

/// Map a raw id into its table column; out-of-range ids (and every id
/// under `NoInherent`) land on the reserved unknown column 0.
fn id_column(id: u32, table_rows: usize, ablation: AblationMode) -> usize {
    if ablation == AblationMode::NoInherent {
        return 0;
    }
    let idx = id as usize + 1;
    if idx < table_rows {
        idx
    } else {
        0
    }
}

/// Run encoder + LSTM for one observation. `prev` enters as constant
/// leaves; unrolled BPTT passes the previous step's `h`/`c` nodes via
/// `prev_nodes` instead.
pub fn trunk_forward(
    tape: &mut Tape<'_>,
    ids: &NetIds,
    dims: &NetDims,
    obs: &AssembledObs,
    prev: &LstmState,
    ablation: AblationMode,
) -> Result<TrunkOut> {
    let prev_h = tape.leaf(&prev.h);
    let prev_c = tape.leaf(&prev.c);
    trunk_forward_nodes(tape, ids, dims, obs, prev_h, prev_c, ablation)
}

pub fn trunk_forward_nodes(
    tape: &mut Tape<'_>,
    ids: &NetIds,
    dims: &NetDims,
    obs: &AssembledObs,
    prev_h: NodeId,
    prev_c: NodeId,
    ablation: AblationMode,
) -> Result<TrunkOut> {
    if obs.content.len() != dims.content_dim {
        return Err(Error::config(format!(
            "content embedding dim {} != configured {}",
            obs.content.len(),
            dims.content_dim
        )));
    }

    let s = tape.leaf(&obs.numeric[..NOMINAL_DIM]);
    let xt_raw = if ablation == AblationMode::NoTrend {
        [0.0; TREND_DIM].to_vec()
    } else {
        obs.numeric[NOMINAL_DIM..].to_vec()
    };
    let x_t = tape.leaf(&xt_raw);

    let content = if ablation == AblationMode::NoInherent {
        vec![0.0; dims.content_dim]
    } else {
        obs.content.clone()
    };
    let content = tape.leaf(&content);

    let cat = tape.leaf(&one_hot(
        dims.n_categories + 1,
        id_column(obs.category_id, dims.n_categories + 1, ablation),
    ));
    let brand = tape.leaf(&one_hot(
        dims.n_brands + 1,
        id_column(obs.brand_id, dims.n_brands + 1, ablation),
    ));
    let shop = tape.leaf(&one_hot(
        dims.n_shops + 1,
        id_column(obs.shop_id, dims.n_shops + 1, ablation),
    ));
    let cat_e = tape.matvec(ids.cat_table, cat)?;
    let brand_e = tape.matvec(ids.brand_table, brand)?;
    let shop_e = tape.matvec(ids.shop_table, shop)?;
    let id_cat = tape.concat(&[cat_e, brand_e, shop_e]);
    let enc = dense(tape, ids.enc_w, ids.enc_b, id_cat, ActKind::Tanh)?;
    let x_e = tape.concat(&[content, enc]);

    let o_e = tape.concat(&[s, x_t, x_e]);

    let (h, c) = if ablation == AblationMode::NoRecurrent {
        let zero_h = tape.leaf(&vec![0.0; dims.hidden]);
        let zero_c = tape.leaf(&vec![0.0; dims.hidden]);
        (zero_h, zero_c)
    } else {
        lstm_step(tape, &ids.lstm, o_e, prev_h, prev_c)?
    };

    Ok(TrunkOut {
        s,
        x_t,
        x_e,
        o_e,
        h,
        c,
    })
}
