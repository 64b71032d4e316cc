//! A controlled two-arm serving comparison, the offline stand-in for an
//! online bucket test. One world, one seed: a mature background pool
//! keeps the market realistic, and two disjoint cold-start cohorts with
//! equal impression budgets differ in exactly one thing, the ranking
//! policy that serves them. Each arm's raw day-by-item outcomes are
//! written alongside its aggregates, so any reported delta can be redone
//! from first principles.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::config::{ExperimentConfig, FORMAT_VERSION};
use crate::mdp::ItemId;
use crate::sim::{spawn_cohort, SimWorld};
use crate::streams::{stream, Tag};
use crate::trainer::{generate_transitions, Agent};

/// Decouples the comparison world from the training world.
const ARMS_WORLD_SALT: u64 = 0x2545_f491_4f6c_dd1d;
/// Separate stream family for the cohort draw and the arm assignment, so
/// neither can collide with the world's own spawn streams.
const COHORT_SALT: u64 = 0x4528_21e6_38d0_1377;

pub const ARM_FILE: &str = "arm.json";
pub const OUTCOMES_FILE: &str = "outcomes.jsonl";
pub const VANILLA_POLICY: &str = "vanilla";
pub const RL_POLICY: &str = "rl_ltv";

/// The identity card of one arm directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRecord {
    pub version: u32,
    pub name: String,
    /// `vanilla` or `rl_ltv`.
    pub policy: String,
    /// Seed of the shared world; arms are only comparable when equal.
    pub sim_seed: u64,
    /// Measured serving days.
    pub days: u32,
    /// Sorted cohort ids; arms must be pairwise disjoint.
    pub cohort: Vec<ItemId>,
}

/// One cohort item's realized funnel on one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub day: u32,
    pub item: ItemId,
    pub pv_rec: u64,
    pub pv_other: u64,
    pub pv_total: u64,
    pub ipv: u64,
    pub sls: u64,
    pub gmv: f64,
}

/// Run the comparison and write one directory per arm under `out`.
/// Returns `[vanilla_dir, rl_dir]`.
pub fn run_arms(cfg: &ExperimentConfig, agent: &Agent, out: &Path) -> Result<[PathBuf; 2]> {
    cfg.validate()?;
    if agent.dims.content_dim != cfg.sim.content_dim
        || agent.dims.n_categories < cfg.sim.n_categories
        || agent.dims.n_brands < cfg.sim.n_brands
        || agent.dims.n_shops < cfg.sim.n_shops
    {
        return Err(Error::config(
            "arms: agent network does not fit the simulator's feature spaces",
        ));
    }
    let run = cfg.stamped();
    let a = &run.arms;
    let mut sim = run.sim.clone();
    sim.seed = run.seed ^ ARMS_WORLD_SALT;
    let cohort_seed = run.seed ^ COHORT_SALT;

    // Pool 0: background. Pools 1 and 2: the arms, equal by construction.
    let mut world = SimWorld::new(
        sim.clone(),
        vec![a.background_budget, a.cohort_budget, a.cohort_budget],
    )?;
    world.spawn(a.mature_items, 0)?;
    world.run_vanilla_days(a.warmup_days)?;

    // One latent draw for both cohorts, then a seeded shuffle assigns
    // arms; insertion order is slot order, so item ids interleave and
    // carry no arm information.
    let n = a.cold_per_arm;
    let latents = spawn_cohort(2 * n, world.day(), 0, cohort_seed, &sim)?;
    let mut order: Vec<usize> = (0..2 * n).collect();
    let mut rng = stream(cohort_seed, Tag::CohortSplit, &[]);
    for i in (1..order.len()).rev() {
        let j = rand::Rng::random_range(&mut rng, 0..=i);
        order.swap(i, j);
    }
    let mut pool_of_slot = vec![0usize; 2 * n];
    for (pos, &slot) in order.iter().enumerate() {
        pool_of_slot[slot] = if pos < n { 1 } else { 2 };
    }
    let mut cohorts: [Vec<ItemId>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for (slot, (_, latent)) in latents.into_iter().enumerate() {
        let id = world.insert_item(latent, pool_of_slot[slot])?;
        cohorts[pool_of_slot[slot] - 1].push(id);
    }

    // Serve: pool 2 is ranked by the learned blend, everything else by
    // the relevance baseline. sigma 0 keeps the policy greedy.
    let gen = generate_transitions(&mut world, agent, a.days, 0.0, 0, cohort_seed, Some(&[2]), &[])?;

    let arm_meta = [
        ("vanilla", VANILLA_POLICY),
        ("rl_ltv", RL_POLICY),
    ];
    let mut dirs = [PathBuf::new(), PathBuf::new()];
    for (arm, (name, policy)) in arm_meta.iter().enumerate() {
        let members: BTreeSet<ItemId> = cohorts[arm].iter().copied().collect();
        let mut rows = Vec::with_capacity(members.len() * a.days as usize);
        for day_result in gen.day_results.iter().take(a.days as usize) {
            for (id, o) in &day_result.outcomes {
                if members.contains(id) {
                    rows.push(OutcomeRow {
                        day: o.day,
                        item: o.item,
                        pv_rec: o.pv_rec,
                        pv_other: o.pv_other,
                        pv_total: o.pv_total,
                        ipv: o.ipv,
                        sls: o.sls,
                        gmv: o.gmv,
                    });
                }
            }
        }
        let record = ArmRecord {
            version: FORMAT_VERSION,
            name: name.to_string(),
            policy: policy.to_string(),
            sim_seed: sim.seed,
            days: a.days,
            cohort: members.iter().copied().collect(),
        };
        let dir = out.join(name);
        fs::create_dir_all(&dir)?;
        let json = serde_json::to_string_pretty(&record)
            .map_err(|e| Error::format(format!("encode arm record: {e}")))?;
        fs::write(dir.join(ARM_FILE), json + "\n")?;
        let mut jsonl = String::new();
        for row in &rows {
            jsonl.push_str(
                &serde_json::to_string(row)
                    .map_err(|e| Error::format(format!("encode outcome row: {e}")))?,
            );
            jsonl.push('\n');
        }
        fs::write(dir.join(OUTCOMES_FILE), jsonl)?;
        dirs[arm] = dir;
    }
    Ok(dirs)
}

/// Lifetime-value aggregates of one arm with its deltas against the
/// vanilla arm. The vanilla arm is compared with itself, so its deltas
/// are exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub name: String,
    pub policy: String,
    pub items: usize,
    pub pv: u64,
    pub ipv: u64,
    pub sls: u64,
    pub gmv: f64,
    pub d_pv_pct: f64,
    pub d_ipv_pct: f64,
    pub d_gmv_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmComparison {
    pub version: u32,
    pub days: u32,
    pub arms: Vec<ArmSummary>,
}

struct LoadedArm {
    record: ArmRecord,
    rows: Vec<OutcomeRow>,
}

fn load_arm(dir: &Path) -> Result<LoadedArm> {
    let json = fs::read_to_string(dir.join(ARM_FILE))
        .map_err(|e| Error::protocol(format!("{}: {e}", dir.display())))?;
    let record: ArmRecord = serde_json::from_str(&json)
        .map_err(|e| Error::format(format!("{}: arm record parse: {e}", dir.display())))?;
    if record.version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "{}: arm format version {} (expected {FORMAT_VERSION})",
            dir.display(),
            record.version
        )));
    }
    let content = fs::read_to_string(dir.join(OUTCOMES_FILE))
        .map_err(|e| Error::protocol(format!("{}: {e}", dir.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        rows.push(serde_json::from_str::<OutcomeRow>(line).map_err(|e| {
            Error::format(format!(
                "{}:{}: outcome row parse: {e}",
                dir.display(),
                lineno + 1
            ))
        })?);
    }
    Ok(LoadedArm { record, rows })
}

fn pct_delta(value: f64, base: f64) -> Result<f64> {
    if base <= 0.0 {
        return Err(Error::numeric("arm comparison: vanilla aggregate is zero"));
    }
    Ok(100.0 * (value - base) / base)
}

/// Aggregate each arm's raw outcome rows and report lifetime-value deltas
/// against the vanilla arm. Arms must come from the same world (equal
/// seeds and day counts) and hold pairwise-disjoint cohorts.
pub fn compare_arms<P: AsRef<Path>>(dirs: &[P]) -> Result<ArmComparison> {
    if dirs.is_empty() {
        return Err(Error::config("arm comparison needs at least one arm"));
    }
    let arms: Vec<LoadedArm> = dirs
        .iter()
        .map(|d| load_arm(d.as_ref()))
        .collect::<Result<_>>()?;

    let mut names = BTreeSet::new();
    for arm in &arms {
        if !names.insert(arm.record.name.clone()) {
            return Err(Error::protocol(format!(
                "duplicate arm name `{}`",
                arm.record.name
            )));
        }
    }
    let seed0 = arms[0].record.sim_seed;
    let days0 = arms[0].record.days;
    for arm in &arms[1..] {
        if arm.record.sim_seed != seed0 {
            return Err(Error::protocol(format!(
                "arm `{}` ran on a different simulator seed",
                arm.record.name
            )));
        }
        if arm.record.days != days0 {
            return Err(Error::protocol(format!(
                "arm `{}` measured a different day count",
                arm.record.name
            )));
        }
    }
    let vanilla: Vec<usize> = (0..arms.len())
        .filter(|&i| arms[i].record.policy == VANILLA_POLICY)
        .collect();
    let &[base_idx] = vanilla.as_slice() else {
        return Err(Error::protocol(format!(
            "arm comparison needs exactly one vanilla arm, found {}",
            vanilla.len()
        )));
    };
    for i in 0..arms.len() {
        for j in (i + 1)..arms.len() {
            let a: BTreeSet<ItemId> = arms[i].record.cohort.iter().copied().collect();
            if let Some(shared) = arms[j].record.cohort.iter().find(|id| a.contains(id)) {
                return Err(Error::protocol(format!(
                    "arms `{}` and `{}` share item {}: cohorts must be disjoint",
                    arms[i].record.name, arms[j].record.name, shared
                )));
            }
        }
    }
    for arm in &arms {
        let members: BTreeSet<ItemId> = arm.record.cohort.iter().copied().collect();
        if let Some(row) = arm.rows.iter().find(|r| !members.contains(&r.item)) {
            return Err(Error::protocol(format!(
                "arm `{}` holds outcomes for item {} outside its cohort",
                arm.record.name, row.item
            )));
        }
        let expected = members.len() * arm.record.days as usize;
        if arm.rows.len() != expected {
            return Err(Error::protocol(format!(
                "arm `{}` holds {} outcome rows, expected {expected}",
                arm.record.name,
                arm.rows.len()
            )));
        }
    }

    let totals: Vec<(u64, u64, u64, f64)> = arms
        .iter()
        .map(|arm| {
            arm.rows.iter().fold((0u64, 0u64, 0u64, 0.0f64), |acc, r| {
                (
                    acc.0 + r.pv_total,
                    acc.1 + r.ipv,
                    acc.2 + r.sls,
                    acc.3 + r.gmv,
                )
            })
        })
        .collect();
    let base = totals[base_idx];
    let mut summaries = Vec::with_capacity(arms.len());
    for (arm, &(pv, ipv, sls, gmv)) in arms.iter().zip(&totals) {
        summaries.push(ArmSummary {
            name: arm.record.name.clone(),
            policy: arm.record.policy.clone(),
            items: arm.record.cohort.len(),
            pv,
            ipv,
            sls,
            gmv,
            d_pv_pct: pct_delta(pv as f64, base.0 as f64)?,
            d_ipv_pct: pct_delta(ipv as f64, base.1 as f64)?,
            d_gmv_pct: pct_delta(gmv, base.3)?,
        });
    }
    Ok(ArmComparison {
        version: FORMAT_VERSION,
        days: days0,
        arms: summaries,
    })
}

/// Deterministic CSV rendering of a comparison.
pub fn comparison_to_csv(cmp: &ArmComparison) -> String {
    let mut out = String::from("arm,policy,items,pv,ipv,sls,gmv,d_pv_pct,d_ipv_pct,d_gmv_pct\n");
    for arm in &cmp.arms {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            arm.name,
            arm.policy,
            arm.items,
            arm.pv,
            arm.ipv,
            arm.sls,
            arm.gmv,
            arm.d_pv_pct,
            arm.d_ipv_pct,
            arm.d_gmv_pct
        ));
    }
    out
}
