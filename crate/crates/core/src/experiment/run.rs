//! Driving one experiment end to end: resumable training, the offline
//! evaluation pass, and a sealed artifact directory.
//!
//! Layout of a finished run directory:
//!
//! ```text
//! config.kv                 exact snapshot of the declared config
//! train/metrics.jsonl       one session record per line
//! train/agent_latest.ckpt   parameters after the last session
//! train/state/              resume point (runner + agent + buffer)
//! eval/trace.jsonl          the evaluation world's day-by-day log
//! eval/records.jsonl        scored evaluation records
//! eval/table.csv            regression and ranking metrics per model
//! eval/sweep.csv            blend-weight sweep
//! eval/lstm_summary.json    supervised-baseline training outcome
//! manifest.json             sha-256 digests of everything above
//! ```
//!
//! The run is a pure function of its config: the same config produces
//! byte-identical artifacts, and therefore the same manifest digest, no
//! matter where the directory lives or how often training was stopped and
//! resumed in between.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{
    alpha_grid, alpha_sweep, build_records, empirical_scores, group_history, rows_to_csv,
    sweep_to_csv, table_rows, training_sequences, EmpiricalWeights, EvalSetConfig, LstmBaseline,
    TrainSummary,
};
use crate::experiment::config::ExperimentConfig;
use crate::experiment::manifest::Manifest;
use crate::sim::{DayResult, SimWorld};
use crate::trainer::{Agent, SessionRunner, SpawnEvent};

/// Decouples the evaluation world's latent draws from the training
/// world's, which share the master seed otherwise.
const EVAL_WORLD_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub const CONFIG_FILE: &str = "config.kv";
pub const TRAIN_DIR: &str = "train";
pub const STATE_DIR: &str = "train/state";
pub const METRICS_FILE: &str = "train/metrics.jsonl";
pub const CKPT_FILE: &str = "train/agent_latest.ckpt";
pub const TRACE_FILE: &str = "eval/trace.jsonl";
pub const RECORDS_FILE: &str = "eval/records.jsonl";
pub const TABLE_FILE: &str = "eval/table.csv";
pub const SWEEP_FILE: &str = "eval/sweep.csv";
pub const LSTM_FILE: &str = "eval/lstm_summary.json";

/// Every sealed output, in the order the manifest lists them.
pub const MANIFEST_PATHS: &[&str] = &[
    CONFIG_FILE,
    METRICS_FILE,
    CKPT_FILE,
    TRACE_FILE,
    RECORDS_FILE,
    TABLE_FILE,
    SWEEP_FILE,
    LSTM_FILE,
];

/// Root for run directories given as bare names: the `RL_LTV_OUT_ROOT`
/// environment variable, else the current directory.
pub fn out_root() -> PathBuf {
    std::env::var_os("RL_LTV_OUT_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Bare names land under the output root; anything with a path separator
/// is used as given.
pub fn resolve_run_dir(name_or_path: &str) -> PathBuf {
    let p = Path::new(name_or_path);
    if p.is_absolute() || name_or_path.contains(std::path::MAIN_SEPARATOR) {
        p.to_path_buf()
    } else {
        out_root().join(p)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub sessions_done: u64,
    pub lstm: TrainSummary,
    pub manifest: Manifest,
}

/// Write the config snapshot, or check it against the one already there:
/// a run directory belongs to exactly one config for its whole life.
fn ensure_snapshot(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(CONFIG_FILE);
    let rendered = cfg.render_kv();
    if path.exists() {
        let existing = fs::read_to_string(&path)?;
        if existing != rendered {
            return Err(Error::protocol(format!(
                "{} was created by a different config; refusing to mix artifacts",
                dir.display()
            )));
        }
    } else {
        fs::write(&path, rendered)?;
    }
    Ok(())
}

/// Fresh items arrive at the start of every session after the first; the
/// initial cohort covers session zero.
fn spawn_plan(cfg: &ExperimentConfig) -> Vec<SpawnEvent> {
    if cfg.spawn_per_session == 0 {
        return Vec::new();
    }
    (1..cfg.sessions)
        .map(|session| SpawnEvent {
            session,
            day_offset: 0,
            n: cfg.spawn_per_session,
            pool: 0,
        })
        .collect()
}

/// The metrics log is one line per completed session. A crash between
/// the in-session append and the state save can leave one extra line, so
/// a resume trims the log back to the sessions the state has actually
/// kept; the trimmed session re-runs and re-appends identically.
fn truncate_metrics(path: &Path, sessions: u64) -> Result<()> {
    if !path.exists() {
        if sessions == 0 {
            return Ok(());
        }
        return Err(Error::protocol(format!(
            "{} is missing but the saved state has completed sessions",
            path.display()
        )));
    }
    let content = fs::read_to_string(path)?;
    let lines: Vec<&str> = content.lines().collect();
    if (lines.len() as u64) < sessions {
        return Err(Error::protocol(format!(
            "{} has fewer lines than completed sessions",
            path.display()
        )));
    }
    if lines.len() as u64 > sessions {
        let mut kept = lines[..sessions as usize].join("\n");
        if sessions > 0 {
            kept.push('\n');
        }
        fs::write(path, kept)?;
    }
    Ok(())
}

/// Advance training to `min(limit, cfg.sessions)` completed sessions,
/// resuming from the directory's saved state when one exists. Each
/// session is saved as it completes, so an interrupted call loses at
/// most the session in flight.
pub fn train_sessions(
    cfg: &ExperimentConfig,
    dir: &Path,
    limit: u64,
) -> Result<SessionRunner> {
    cfg.validate()?;
    ensure_snapshot(cfg, dir)?;
    let run = cfg.stamped();
    let state_dir = dir.join(STATE_DIR);
    let mut runner = if state_dir.join("runner.json").exists() {
        let runner = SessionRunner::load_state(&state_dir)?;
        truncate_metrics(&dir.join(METRICS_FILE), runner.session)?;
        runner.with_out_dir(dir.join(TRAIN_DIR))?
    } else {
        let mut world = SimWorld::new(run.sim.clone(), run.pools.clone())?;
        world.spawn(run.initial_items, 0)?;
        let agent = Agent::new(
            run.dims,
            run.trainer.ablation,
            run.trainer.lr,
            (run.trainer.alpha_min, run.trainer.alpha_max),
            run.trainer.freeze_price,
            run.seed,
        )?;
        let mut runner = SessionRunner::new(world, agent, run.trainer.clone())?
            .with_out_dir(dir.join(TRAIN_DIR))?;
        runner.spawn_plan = spawn_plan(&run);
        runner
    };
    let target = limit.min(run.sessions);
    while runner.session < target {
        runner.run_one()?;
        runner.save_state(&state_dir)?;
    }
    Ok(runner)
}

/// One serialized value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(
            &serde_json::to_string(item).map_err(|e| Error::format(format!("encode: {e}")))?,
        );
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let content = fs::read_to_string(path)
        .map_err(|e| Error::protocol(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        out.push(serde_json::from_str(line).map_err(|e| {
            Error::format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?);
    }
    Ok(out)
}

/// Roll the evaluation world: a fresh market on its own seed stream,
/// spawning in waves and served by the relevance baseline alone, so the
/// scored data is never influenced by the policy under test.
pub fn vanilla_eval_trace(cfg: &ExperimentConfig) -> Result<Vec<DayResult>> {
    cfg.validate()?;
    let run = cfg.stamped();
    let e = &run.eval;
    let mut sim = run.sim.clone();
    sim.seed = run.seed ^ EVAL_WORLD_SALT;
    let mut world = SimWorld::new(sim, vec![run.pools[0]])?;

    let mut remaining = e.items;
    let mut trace: Vec<DayResult> = Vec::with_capacity(e.trace_days() as usize);
    for day in 0..e.trace_days() {
        if remaining > 0 && day % e.wave_gap == 0 {
            let n = remaining.min(e.wave_size);
            world.spawn(n, 0)?;
            remaining -= n;
        }
        trace.extend(world.run_vanilla_days(1)?);
    }
    Ok(trace)
}

/// Score a trace with the trained agent and the two reference models and
/// write the evaluation artifacts (records, metrics table, sweep,
/// baseline summary) under `dir`. Baselines fit only on days before the
/// scored window; the window itself is ranked blind.
pub fn score_trace(
    cfg: &ExperimentConfig,
    agent: &Agent,
    trace: &[DayResult],
    dir: &Path,
) -> Result<TrainSummary> {
    cfg.validate()?;
    let run = cfg.stamped();
    let e = &run.eval;
    if (trace.len() as u32) < e.trace_days() {
        return Err(Error::protocol(format!(
            "trace holds {} days but the evaluation window needs {}",
            trace.len(),
            e.trace_days()
        )));
    }
    let set = EvalSetConfig {
        horizon: e.horizon,
        gamma: run.trainer.gamma,
        eval_start: e.start,
        eval_end: e.end,
        max_list: e.max_list,
        seed: run.seed,
    };
    let records = build_records(trace, agent, &set)?;

    let pre_window = &trace[..e.start as usize];
    let seqs = training_sequences(pre_window, e.horizon, run.trainer.gamma)?;
    let mut lstm = LstmBaseline::new(run.dims, e.lstm_lr, run.seed)?;
    let summary = lstm.train(&seqs, e.lstm_epochs, run.seed)?;
    let preds = lstm.predictions(trace)?;
    let history = group_history(&seqs);
    let empirical = empirical_scores(&records, &history, EmpiricalWeights::default())?;

    let rows = table_rows(&records, &preds, &empirical, &e.ndcg_ks)?;
    let table_csv = rows_to_csv(&rows)?;
    let points = alpha_sweep(&records, &alpha_grid(e.sweep_step)?, &e.ndcg_ks)?;
    let sweep_csv = sweep_to_csv(&points)?;

    fs::create_dir_all(dir.join("eval"))?;
    write_jsonl(&dir.join(RECORDS_FILE), &records)?;
    fs::write(dir.join(TABLE_FILE), table_csv)?;
    fs::write(dir.join(SWEEP_FILE), sweep_csv)?;
    let lstm_json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::format(format!("encode: {e}")))?;
    fs::write(dir.join(LSTM_FILE), lstm_json + "\n")?;
    Ok(summary)
}

fn eval_phase(cfg: &ExperimentConfig, agent: &Agent, dir: &Path) -> Result<TrainSummary> {
    let trace = vanilla_eval_trace(cfg)?;
    fs::create_dir_all(dir.join("eval"))?;
    write_jsonl(&dir.join(TRACE_FILE), &trace)?;
    score_trace(cfg, agent, &trace, dir)
}

/// The whole pipeline: train (or finish training), evaluate, seal. Safe
/// to re-invoke on a finished directory; every phase reproduces its own
/// artifacts byte for byte.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutcome> {
    let runner = train_sessions(cfg, dir, u64::MAX)?;
    let lstm = eval_phase(cfg, &runner.agent, dir)?;
    let manifest = Manifest::compute(dir, MANIFEST_PATHS)?;
    manifest.write(dir)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        sessions_done: runner.session,
        lstm,
        manifest,
    })
}
