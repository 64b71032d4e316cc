//! The repeating two-phase session: generate a window of transitions,
//! then run several update epochs over the replay buffer, refreshing the
//! observation normalizer (first session only) and the mixer's critic
//! bounds (every session). Sessions append one metrics line each and the
//! whole runner state can snapshot to disk and resume bit-exactly.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::types::NUMERIC_DIM;
use crate::mdp::{Episode, Normalizer};
use crate::rank::q_bounds_from_samples;
use crate::sim::SimWorld;
use crate::trainer::agent::Agent;
use crate::trainer::buffer::ReplayBuffer;
use crate::trainer::config::TrainerConfig;
use crate::trainer::generate::{generate_transitions, GenerationOut, SpawnEvent};
use crate::trainer::update::update_epoch;

/// One line of the training metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session: u64,
    pub sigma: f64,
    pub episodes_added: usize,
    pub buffer_len: usize,
    pub critic_loss: f64,
    pub actor_obj: f64,
    pub q_p01: f64,
    pub q_p99: f64,
    pub lineage_hash: u64,
    pub underfilled: bool,
}

/// Snapshot of everything outside the agent checkpoint.
#[derive(Serialize, Deserialize)]
struct RunnerState {
    session: u64,
    cfg: TrainerConfig,
    world: SimWorld,
    episodes: Vec<Episode>,
    buffer_inserted: u64,
    spawn_plan: Vec<SpawnEvent>,
    rl_pools: Option<Vec<usize>>,
}

pub struct SessionRunner {
    pub world: SimWorld,
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    pub cfg: TrainerConfig,
    pub session: u64,
    pub spawn_plan: Vec<SpawnEvent>,
    /// Pools the agent scores; `None` scores every pool.
    pub rl_pools: Option<Vec<usize>>,
    out_dir: Option<PathBuf>,
}

impl SessionRunner {
    pub fn new(world: SimWorld, mut agent: Agent, cfg: TrainerConfig) -> Result<Self> {
        cfg.validate()?;
        let sim = world.config();
        if sim.n_categories > agent.dims.n_categories
            || sim.n_brands > agent.dims.n_brands
            || sim.n_shops > agent.dims.n_shops
        {
            return Err(Error::config(
                "network id tables are smaller than the simulator id spaces",
            ));
        }
        if sim.content_dim != agent.dims.content_dim {
            return Err(Error::config("content dimension mismatch between sim and nets"));
        }
        // The runner's config is the single source of truth for the
        // learning rate; otherwise a resumed run could silently step at
        // whatever rate the agent was first constructed with.
        agent.critic_adam.lr = cfg.lr;
        agent.actor_adam.lr = cfg.lr;
        let buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
        Ok(SessionRunner {
            world,
            agent,
            buffer,
            cfg,
            session: 0,
            spawn_plan: Vec::new(),
            rl_pools: None,
            out_dir: None,
        })
    }

    /// Enable metrics and checkpoint output under `dir`.
    pub fn with_out_dir(mut self, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        self.out_dir = Some(dir);
        Ok(self)
    }

    /// Run one generate-then-update session.
    pub fn run_one(&mut self) -> Result<SessionRecord> {
        let sigma = self.cfg.sigma_for_session(self.session);
        let spawns: Vec<(u32, usize, usize)> = self
            .spawn_plan
            .iter()
            .filter(|ev| ev.session == self.session)
            .map(|ev| (ev.day_offset, ev.n, ev.pool))
            .collect();
        let gen = generate_transitions(
            &mut self.world,
            &self.agent,
            self.cfg.episode_days,
            sigma,
            self.session,
            self.cfg.seed,
            self.rl_pools.as_deref(),
            &spawns,
        )?;

        if !self.agent.normalizer.is_fitted() {
            self.agent.normalizer = fit_normalizer(&gen)?;
        }
        let episodes_added = gen.episodes.len();
        for ep in &gen.episodes {
            self.buffer.push(ep.clone())?;
        }

        let mut critic_loss = 0.0;
        let mut actor_obj = 0.0;
        let mut lineage_hash = 0;
        let mut underfilled = false;
        let epochs = self.cfg.epochs_per_session.max(1) as u64;
        for epoch in 0..epochs {
            let stats = match update_epoch(
                &self.buffer,
                &mut self.agent,
                &self.cfg,
                self.session,
                epoch,
            ) {
                Ok(stats) => stats,
                Err(err) => {
                    if matches!(err, Error::Numeric(_)) {
                        self.write_diagnostic();
                    }
                    return Err(err);
                }
            };
            critic_loss += stats.critic_loss;
            actor_obj += stats.actor_obj;
            lineage_hash = stats.lineage_hash;
            underfilled |= stats.underfilled;
        }
        critic_loss /= epochs as f64;
        actor_obj /= epochs as f64;

        if !gen.q_samples.is_empty() {
            self.agent.q_bounds = Some(q_bounds_from_samples(&gen.q_samples)?);
        }
        let (q_p01, q_p99) = self.agent.q_bounds.unwrap_or((0.0, 0.0));

        let record = SessionRecord {
            session: self.session,
            sigma,
            episodes_added,
            buffer_len: self.buffer.len(),
            critic_loss,
            actor_obj,
            q_p01,
            q_p99,
            lineage_hash,
            underfilled,
        };
        self.session += 1;
        if let Some(dir) = self.out_dir.clone() {
            self.append_metrics(&dir, &record)?;
            self.agent.save(&dir.join("agent_latest.ckpt"))?;
        }
        Ok(record)
    }

    /// Run `n` sessions; with `n = 0` nothing is trained (callers may
    /// still evaluate the initial policy).
    pub fn run(&mut self, n: u64) -> Result<Vec<SessionRecord>> {
        let mut records = Vec::with_capacity(n as usize);
        for _ in 0..n {
            records.push(self.run_one()?);
        }
        Ok(records)
    }

    fn append_metrics(&self, dir: &Path, record: &SessionRecord) -> Result<()> {
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join("metrics.jsonl"))?;
        let line = serde_json::to_string(record)
            .map_err(|e| Error::format(format!("metrics serialization: {e}")))?;
        writeln!(file, "{line}")?;
        Ok(())
    }

    fn write_diagnostic(&self) {
        if let Some(dir) = &self.out_dir {
            let _ = self.agent.save(&dir.join("diagnostic.ckpt"));
        }
    }

    /// Snapshot the full runner (agent, world, buffer, counters) to a
    /// directory for exact resumption.
    pub fn save_state(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.agent.save(&dir.join("agent.ckpt"))?;
        let state = RunnerState {
            session: self.session,
            cfg: self.cfg.clone(),
            world: self.world.clone(),
            episodes: self.buffer.iter().cloned().collect(),
            buffer_inserted: self.buffer.inserted(),
            spawn_plan: self.spawn_plan.clone(),
            rl_pools: self.rl_pools.clone(),
        };
        let json = serde_json::to_string(&state)
            .map_err(|e| Error::format(format!("runner state serialization: {e}")))?;
        fs::write(dir.join("runner.json"), json)?;
        Ok(())
    }

    /// Restore a runner saved with [`SessionRunner::save_state`]. Output
    /// stays disabled until re-enabled with [`SessionRunner::with_out_dir`].
    pub fn load_state(dir: &Path) -> Result<Self> {
        let json = fs::read_to_string(dir.join("runner.json"))?;
        let state: RunnerState = serde_json::from_str(&json)
            .map_err(|e| Error::format(format!("runner state parse: {e}")))?;
        let agent = Agent::load(&dir.join("agent.ckpt"), state.cfg.lr)?;
        let buffer = ReplayBuffer::restore(
            state.cfg.buffer_capacity,
            state.episodes,
            state.buffer_inserted,
        )?;
        let mut runner = SessionRunner::new(state.world, agent, state.cfg)?;
        runner.buffer = buffer;
        runner.session = state.session;
        runner.spawn_plan = state.spawn_plan;
        runner.rl_pools = state.rl_pools;
        Ok(runner)
    }
}

/// Fit the numeric normalizer on every observation of a generation pass.
fn fit_normalizer(gen: &GenerationOut) -> Result<Normalizer> {
    let mut rows: Vec<[f64; NUMERIC_DIM]> = Vec::new();
    for ep in &gen.episodes {
        for tr in &ep.transitions {
            rows.push(tr.obs.numeric_raw());
        }
        if let Some(last) = ep.transitions.last() {
            rows.push(last.next_obs.numeric_raw());
        }
    }
    if rows.is_empty() {
        return Err(Error::domain("normalizer fit: no observations generated"));
    }
    Normalizer::fit(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SimConfig;
    use crate::trunk::{AblationMode, NetDims};

    fn small_dims() -> NetDims {
        NetDims {
            content_dim: 6,
            id_embed_dim: 3,
            encoder_out: 4,
            n_categories: 3,
            n_brands: 4,
            n_shops: 5,
            hidden: 4,
            wide_out: 6,
            deep_hidden: 8,
            deep_out: 6,
            critic_hidden: 8,
        }
    }

    fn small_sim(seed: u64) -> SimConfig {
        SimConfig {
            seed,
            n_categories: 3,
            n_brands: 4,
            n_shops: 5,
            content_dim: 6,
            ..SimConfig::default()
        }
    }

    fn runner(seed: u64) -> SessionRunner {
        let mut world = SimWorld::new(small_sim(seed), vec![400]).unwrap();
        world.spawn(4, 0).unwrap();
        let agent =
            Agent::new(small_dims(), AblationMode::Full, 1e-3, (0.0, 0.2), true, seed).unwrap();
        let cfg = TrainerConfig {
            episode_days: 3,
            batch_episodes: 4,
            epochs_per_session: 2,
            seed,
            ..TrainerConfig::default()
        };
        SessionRunner::new(world, agent, cfg).unwrap()
    }

    #[test]
    fn one_session_fills_buffer_and_calibrates() {
        let mut r = runner(11);
        assert!(!r.agent.normalizer.is_fitted());
        assert!(r.agent.q_bounds.is_none());
        let rec = r.run_one().unwrap();
        assert_eq!(rec.session, 0);
        assert_eq!(rec.episodes_added, 4);
        assert_eq!(rec.buffer_len, 4);
        assert!(rec.critic_loss.is_finite() && rec.critic_loss >= 0.0);
        assert!(rec.actor_obj.is_finite());
        assert!(rec.q_p01 <= rec.q_p99);
        assert!(r.agent.normalizer.is_fitted());
        assert!(r.agent.q_bounds.is_some());
        assert_eq!(r.session, 1);
    }

    #[test]
    fn normalizer_is_fitted_once_then_frozen() {
        let mut r = runner(12);
        r.run_one().unwrap();
        let frozen = r.agent.normalizer.to_flat();
        r.run_one().unwrap();
        assert_eq!(r.agent.normalizer.to_flat(), frozen);
    }

    #[test]
    fn sessions_are_seed_deterministic() {
        let mut a = runner(13);
        let mut b = runner(13);
        let ra = a.run(3).unwrap();
        let rb = b.run(3).unwrap();
        assert_eq!(ra, rb);
        for id in a.agent.params.ids() {
            let name = a.agent.params.name(id).to_string();
            let other = b.agent.params.id(&name).unwrap();
            assert_eq!(a.agent.params.get(id).data, b.agent.params.get(other).data);
        }
    }

    #[test]
    fn snapshot_resume_matches_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut full = runner(14);
        let full_records = full.run(2).unwrap();

        let mut half = runner(14);
        half.run(1).unwrap();
        half.save_state(dir.path()).unwrap();
        let mut resumed = SessionRunner::load_state(dir.path()).unwrap();
        assert_eq!(resumed.session, 1);
        assert_eq!(resumed.buffer.len(), half.buffer.len());
        assert_eq!(resumed.buffer.inserted(), half.buffer.inserted());

        let rec = resumed.run_one().unwrap();
        assert_eq!(rec, full_records[1]);
        for id in full.agent.params.ids() {
            let name = full.agent.params.name(id).to_string();
            let other = resumed.agent.params.id(&name).unwrap();
            assert_eq!(
                full.agent.params.get(id).data,
                resumed.agent.params.get(other).data
            );
        }
    }

    #[test]
    fn probe_restored_state_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut half = runner(14);
        half.run(1).unwrap();
        half.save_state(dir.path()).unwrap();
        let resumed = SessionRunner::load_state(dir.path()).unwrap();

        let eps_a: Vec<&Episode> = half.buffer.iter().collect();
        let eps_b: Vec<&Episode> = resumed.buffer.iter().collect();
        assert_eq!(eps_a.len(), eps_b.len());
        for (i, (a, b)) in eps_a.iter().zip(&eps_b).enumerate() {
            assert_eq!(
                serde_json::to_string(a).unwrap(),
                serde_json::to_string(b).unwrap(),
                "episode {i}"
            );
        }
        assert_eq!(
            serde_json::to_string(&half.agent.normalizer).unwrap(),
            serde_json::to_string(&resumed.agent.normalizer).unwrap()
        );
        assert_eq!(half.agent.q_bounds, resumed.agent.q_bounds);
        assert_eq!(half.agent.critic_adam.lr, resumed.agent.critic_adam.lr);
        assert_eq!(half.agent.actor_adam.lr, resumed.agent.actor_adam.lr);
        for id in half.agent.params.ids() {
            let name = half.agent.params.name(id).to_string();
            let other = resumed.agent.params.id(&name).unwrap();
            let a = &half.agent.params.get(id).data;
            let b = &resumed.agent.params.get(other).data;
            for k in 0..a.len() {
                assert_eq!(a[k].to_bits(), b[k].to_bits(), "online `{name}`[{k}]");
            }
            let ta = &half.agent.targets.get(half.agent.targets.id(&name).unwrap()).data;
            let tb = &resumed
                .agent
                .targets
                .get(resumed.agent.targets.id(&name).unwrap())
                .data;
            for k in 0..ta.len() {
                assert_eq!(ta[k].to_bits(), tb[k].to_bits(), "target `{name}`[{k}]");
            }
        }
        let na = half.agent.critic_adam.to_named("a", &half.agent.params);
        let nb = resumed.agent.critic_adam.to_named("a", &resumed.agent.params);
        assert_eq!(na.keys().collect::<Vec<_>>(), nb.keys().collect::<Vec<_>>());
        for (k, ta) in &na {
            let tb = &nb[k];
            for (i, (x, y)) in ta.data.iter().zip(&tb.data).enumerate() {
                assert_eq!(x.to_bits(), y.to_bits(), "critic adam `{k}`[{i}]");
            }
        }
        let na = half.agent.actor_adam.to_named("a", &half.agent.params);
        let nb = resumed.agent.actor_adam.to_named("a", &resumed.agent.params);
        for (k, ta) in &na {
            let tb = &nb[k];
            for (i, (x, y)) in ta.data.iter().zip(&tb.data).enumerate() {
                assert_eq!(x.to_bits(), y.to_bits(), "actor adam `{k}`[{i}]");
            }
        }
        let wa = serde_json::to_string(&half.world).unwrap();
        let wb = serde_json::to_string(&resumed.world).unwrap();
        assert_eq!(wa, wb, "world serialization");
    }

    #[test]
    fn metrics_file_appends_one_line_per_session() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = runner(15).with_out_dir(dir.path()).unwrap();
        r.run(2).unwrap();
        let text = fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let rec: SessionRecord = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(rec.session, 1);
        assert!(dir.path().join("agent_latest.ckpt").exists());
    }
}
