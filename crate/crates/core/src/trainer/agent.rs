//! The learning agent: one shared parameter set for trunk + heads, a
//! lagged target copy, per-group Adam states, the observation normalizer,
//! and the critic-value bounds that drive the ranking blend.

use std::path::Path;

use rand::Rng;

use crate::actor::{act, explore, ActOutput};
use crate::critic::q_value;
use crate::error::{Error, Result};
use crate::mdp::normalizer::{assemble_observation, AssembledObs, Normalizer};
use crate::mdp::types::{Action, Observation};
use crate::nn::{read_tensors, write_tensors, AdamState, LstmState, ParamSet, Tensor};
use crate::rank::MixerConfig;
use crate::streams::{stream, Tag};
use crate::trunk::{AblationMode, NetDims, NetIds};

#[derive(Debug, Clone)]
pub struct Agent {
    pub dims: NetDims,
    pub ablation: AblationMode,
    pub ids: NetIds,
    pub params: ParamSet,
    pub targets: ParamSet,
    pub critic_adam: AdamState,
    pub actor_adam: AdamState,
    pub normalizer: Normalizer,
    /// Critic-value percentile bounds from the last generation stage;
    /// `None` until the first session has produced statistics.
    pub q_bounds: Option<(f64, f64)>,
    pub alpha_bounds: (f64, f64),
    pub freeze_price: bool,
}

impl Agent {
    pub fn new(
        dims: NetDims,
        ablation: AblationMode,
        lr: f64,
        alpha_bounds: (f64, f64),
        freeze_price: bool,
        init_seed: u64,
    ) -> Result<Self> {
        dims.validate()?;
        let mut params = ParamSet::new();
        let mut rng = stream(init_seed, Tag::ParamInit, &[]);
        let ids = NetIds::register(&mut params, &dims, &mut rng)?;
        let targets = params.clone();
        let critic_adam = AdamState::new(&params, ids.critic_group(), lr);
        let actor_adam = AdamState::new(&params, ids.actor_group(), lr);
        Ok(Agent {
            dims,
            ablation,
            ids,
            params,
            targets,
            critic_adam,
            actor_adam,
            normalizer: Normalizer::identity(),
            q_bounds: None,
            alpha_bounds,
            freeze_price,
        })
    }

    /// Ranking mixer for the current calibration state. Before any
    /// critic statistics exist the blend stays at the relevance-only
    /// endpoint.
    pub fn mixer(&self) -> Result<MixerConfig> {
        match self.q_bounds {
            None => MixerConfig::with_fixed_alpha(self.alpha_bounds.0),
            Some((lo, hi)) => {
                MixerConfig::new(self.alpha_bounds.0, self.alpha_bounds.1, lo, hi)
            }
        }
    }

    pub fn assemble(&self, obs: &Observation) -> Result<AssembledObs> {
        assemble_observation(obs, &self.normalizer)
    }

    /// Greedy policy step.
    pub fn act_greedy(&self, obs: &AssembledObs, prev: &LstmState) -> Result<ActOutput> {
        act(
            &self.params,
            &self.ids,
            &self.dims,
            obs,
            prev,
            self.ablation,
            self.freeze_price,
        )
    }

    /// Behavior policy step: greedy action with logit-space noise, plus
    /// the critic's estimate at the noised action. Returns the carried
    /// recurrent state.
    pub fn behavior(
        &self,
        obs: &AssembledObs,
        prev: &LstmState,
        sigma: f64,
        rng: &mut impl Rng,
    ) -> Result<(Action, LstmState, f64)> {
        let out = self.act_greedy(obs, prev)?;
        let action = explore(&out.action, sigma, rng);
        let (qv, _) = q_value(
            &self.params,
            &self.ids,
            &self.dims,
            obs,
            prev,
            &action,
            self.ablation,
        )?;
        Ok((action, out.state, qv.q))
    }

    /// Critic value at an arbitrary action.
    pub fn q_at(&self, obs: &AssembledObs, prev: &LstmState, action: &Action) -> Result<f64> {
        let (qv, _) = q_value(
            &self.params,
            &self.ids,
            &self.dims,
            obs,
            prev,
            action,
            self.ablation,
        )?;
        Ok(qv.q)
    }

    pub fn zero_state(&self) -> LstmState {
        LstmState::zeros(self.dims.hidden)
    }

    /// Serialize everything needed to resume training bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut named = std::collections::BTreeMap::new();
        for (k, v) in self.params.to_named() {
            named.insert(format!("online.{k}"), v);
        }
        for (k, v) in self.targets.to_named() {
            named.insert(format!("target.{k}"), v);
        }
        named.extend(self.critic_adam.to_named("adam.critic", &self.params));
        named.extend(self.actor_adam.to_named("adam.actor", &self.params));
        named.insert(
            "normalizer.flat".into(),
            Tensor::vector(self.normalizer.to_flat()),
        );
        named.insert("meta.dims".into(), Tensor::vector(self.dims.to_flat()));
        let (has, lo, hi) = match self.q_bounds {
            Some((lo, hi)) => (1.0, lo, hi),
            None => (0.0, 0.0, 0.0),
        };
        named.insert(
            "meta.state".into(),
            Tensor::vector(vec![
                has,
                lo,
                hi,
                self.alpha_bounds.0,
                self.alpha_bounds.1,
                if self.freeze_price { 1.0 } else { 0.0 },
                ablation_code(self.ablation),
            ]),
        );
        write_tensors(path, &named)
    }

    /// Restore an agent saved with [`Agent::save`]. The learning rate is
    /// supplied by the caller (it is not part of the Adam moments).
    pub fn load(path: &Path, lr: f64) -> Result<Self> {
        let named = read_tensors(path)?;
        let meta = named
            .get("meta.state")
            .ok_or_else(|| Error::format("checkpoint missing `meta.state`"))?;
        if meta.data.len() != 7 {
            return Err(Error::format("checkpoint `meta.state` has wrong length"));
        }
        let dims = NetDims::from_flat(
            &named
                .get("meta.dims")
                .ok_or_else(|| Error::format("checkpoint missing `meta.dims`"))?
                .data,
        )?;
        let ablation = ablation_from_code(meta.data[6])?;
        let alpha_bounds = (meta.data[3], meta.data[4]);
        let freeze_price = meta.data[5] != 0.0;
        let mut agent = Agent::new(dims, ablation, lr, alpha_bounds, freeze_price, 0)?;
        let strip = |prefix: &str| -> std::collections::BTreeMap<String, Tensor> {
            named
                .iter()
                .filter_map(|(k, v)| {
                    k.strip_prefix(prefix).map(|rest| (rest.to_string(), v.clone()))
                })
                .collect()
        };
        agent.params.load_named(&strip("online."))?;
        agent.targets.load_named(&strip("target."))?;
        agent
            .critic_adam
            .load_named("adam.critic", &agent.params, &named)?;
        agent
            .actor_adam
            .load_named("adam.actor", &agent.params, &named)?;
        agent.normalizer = Normalizer::from_flat(
            &named
                .get("normalizer.flat")
                .ok_or_else(|| Error::format("checkpoint missing `normalizer.flat`"))?
                .data,
        )?;
        agent.q_bounds = if meta.data[0] != 0.0 {
            Some((meta.data[1], meta.data[2]))
        } else {
            None
        };
        Ok(agent)
    }
}

fn ablation_code(a: AblationMode) -> f64 {
    match a {
        AblationMode::Full => 0.0,
        AblationMode::NoInherent => 1.0,
        AblationMode::NoTrend => 2.0,
        AblationMode::NoRecurrent => 3.0,
    }
}

fn ablation_from_code(code: f64) -> Result<AblationMode> {
    match code as i64 {
        0 => Ok(AblationMode::Full),
        1 => Ok(AblationMode::NoInherent),
        2 => Ok(AblationMode::NoTrend),
        3 => Ok(AblationMode::NoRecurrent),
        other => Err(Error::format(format!("unknown ablation code {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::types::{InherentFeatures, NominalState, Observation, TrendFactors};

    fn tiny_dims() -> NetDims {
        NetDims {
            content_dim: 4,
            id_embed_dim: 3,
            encoder_out: 3,
            n_categories: 3,
            n_brands: 3,
            n_shops: 3,
            hidden: 3,
            wide_out: 4,
            deep_hidden: 6,
            deep_out: 4,
            critic_hidden: 6,
        }
    }

    fn obs() -> Observation {
        let mut s = NominalState::fresh(0.0, 0.0, 0.0);
        s.pv_today = 10.0;
        Observation {
            s,
            x_t: TrendFactors::zeros(),
            x_i: InherentFeatures {
                content: vec![0.1, -0.2, 0.3, 0.05],
                category_id: 1,
                brand_id: 2,
                shop_id: 0,
            },
        }
    }

    #[test]
    fn fresh_agent_has_synchronized_targets() {
        let agent = Agent::new(tiny_dims(), AblationMode::Full, 1e-3, (0.0, 0.2), true, 5)
            .unwrap();
        for id in agent.params.ids() {
            let name = agent.params.name(id).to_string();
            let online = agent.params.get(id);
            let target = agent.targets.get(agent.targets.id(&name).unwrap());
            assert_eq!(online.data, target.data);
        }
    }

    #[test]
    fn mixer_is_relevance_only_before_calibration() {
        let mut agent =
            Agent::new(tiny_dims(), AblationMode::Full, 1e-3, (0.0, 0.2), true, 5).unwrap();
        let m = agent.mixer().unwrap();
        assert_eq!(crate::rank::alpha(123.0, &m).unwrap(), 0.0);
        agent.q_bounds = Some((0.0, 2.0));
        let m = agent.mixer().unwrap();
        assert_eq!(crate::rank::alpha(2.5, &m).unwrap(), 0.2);
    }

    #[test]
    fn save_load_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.ckpt");
        let mut agent =
            Agent::new(tiny_dims(), AblationMode::NoTrend, 1e-3, (0.01, 0.15), false, 9)
                .unwrap();
        agent.q_bounds = Some((-0.5, 1.25));
        agent.save(&path).unwrap();
        let loaded = Agent::load(&path, 1e-3).unwrap();
        assert_eq!(loaded.ablation, AblationMode::NoTrend);
        assert_eq!(loaded.q_bounds, Some((-0.5, 1.25)));
        assert_eq!(loaded.alpha_bounds, (0.01, 0.15));
        assert!(!loaded.freeze_price);
        let o = obs();
        let a = agent.assemble(&o).unwrap();
        let b = loaded.assemble(&o).unwrap();
        let prev = agent.zero_state();
        let x = agent.act_greedy(&a, &prev).unwrap();
        let y = loaded.act_greedy(&b, &prev).unwrap();
        assert_eq!(x.action, y.action);
        assert_eq!(x.state, y.state);
    }

    #[test]
    fn behavior_noise_is_seed_deterministic() {
        let agent = Agent::new(tiny_dims(), AblationMode::Full, 1e-3, (0.0, 0.2), true, 5)
            .unwrap();
        let o = agent.assemble(&obs()).unwrap();
        let prev = agent.zero_state();
        let mut r1 = stream(3, Tag::Exploration, &[0, 0]);
        let mut r2 = stream(3, Tag::Exploration, &[0, 0]);
        let (a1, s1, q1) = agent.behavior(&o, &prev, 0.1, &mut r1).unwrap();
        let (a2, s2, q2) = agent.behavior(&o, &prev, 0.1, &mut r2).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(s1, s2);
        assert_eq!(q1, q2);
    }
}
