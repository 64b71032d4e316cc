//! Single-binary driver for the lifetime-value ranking lab.
//!
//! Subcommands mirror the experiment pipeline: `simulate` rolls the
//! evaluation market and writes its trace, `train` runs (or resumes) a
//! full experiment into a sealed artifact directory, `eval` scores a
//! trace with a trained checkpoint, `sweep-alpha` sweeps the blend
//! weight over scored records, `ablate` repeats the experiment with each
//! pathway knocked out, and `compare` reports arm-versus-vanilla deltas.
//!
//! Configs are plain-text `key = value` files with `include` support.
//! Bare output names land under `RL_LTV_OUT_ROOT` (default: the current
//! directory). Exit codes: 0 success, 2 config error, 3 numeric failure,
//! 4 protocol violation, 1 anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ltv_core::error::{Error, Result};
use ltv_core::eval::EvalRecord;
use ltv_core::experiment::{
    compare_arms, comparison_to_csv, read_jsonl, resolve_run_dir, run_arms, run_experiment,
    score_trace, vanilla_eval_trace, write_jsonl, ExperimentConfig,
};
use ltv_core::eval::{alpha_sweep, sweep_to_csv};
use ltv_core::kvfile::KvConfig;
use ltv_core::sim::DayResult;
use ltv_core::trainer::Agent;
use ltv_core::trunk::AblationMode;

#[derive(Parser)]
#[command(name = "rl-ltv", version, about = "Lifetime-value ranking lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll the evaluation market under the relevance baseline and write
    /// its day-by-day trace.
    Simulate(SimulateArgs),
    /// Run or resume a full experiment: training sessions, offline
    /// evaluation, sealed manifest.
    Train(TrainArgs),
    /// Score a trace with a trained checkpoint: metrics table, scored
    /// records, blend sweep, and a two-arm serving comparison.
    Eval(EvalArgs),
    /// Sweep the blend weight over scored evaluation records.
    #[command(name = "sweep-alpha")]
    SweepAlpha(SweepArgs),
    /// Run the full model and every ablation, then summarize rankings.
    Ablate(AblateArgs),
    /// Compare arm directories; exactly one must be the vanilla arm.
    Compare(CompareArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Key-value config file (supports `include`); defaults apply when
    /// omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            None => Ok(ExperimentConfig::default()),
            Some(path) => ExperimentConfig::from_kv(&KvConfig::from_file(path)?),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Output directory; defaults to `<name>-sim` under the output root.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's session count.
    #[arg(long)]
    sessions: Option<u64>,
    /// Knock out one pathway: x_i, x_t, or recurrent.
    #[arg(long)]
    ablate: Option<String>,
    /// Run directory; defaults to the config's name under the output
    /// root.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained agent checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Trace written by `simulate` (or a run's `eval/trace.jsonl`).
    #[arg(long)]
    trace: PathBuf,
    /// Report directory.
    #[arg(long)]
    out: String,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct SweepArgs {
    /// Scored records (`eval/records.jsonl` of a run or report).
    #[arg(long)]
    records: PathBuf,
    /// Blend-weight grid as start:end:step.
    #[arg(long, default_value = "0:1:0.05")]
    grid: String,
    /// Write the sweep CSV here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's session count.
    #[arg(long)]
    sessions: Option<u64>,
    /// Root directory for the four runs; defaults to `<name>-ablate`.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    /// Arm directories written by `eval` (under `arms/`).
    #[arg(required = true)]
    arms: Vec<PathBuf>,
    /// Write the comparison CSV here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("rl-ltv: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Train(args) => train(args),
        Command::Eval(args) => eval(args),
        Command::SweepAlpha(args) => sweep_alpha(args),
        Command::Ablate(args) => ablate(args),
        Command::Compare(args) => compare(args),
    }
}

/// The spelled-out pathway names double as the short forms of the
/// internal mode names, so both vocabularies work.
fn parse_ablate(s: &str) -> Result<AblationMode> {
    match s {
        "x_i" => Ok(AblationMode::NoInherent),
        "x_t" => Ok(AblationMode::NoTrend),
        "recurrent" | "r" => Ok(AblationMode::NoRecurrent),
        other => AblationMode::parse(other),
    }
}

/// `start:end:step`, all inside [0, 1], endpoints included when the step
/// lands on them.
fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, end, step] = parts[..] else {
        return Err(Error::config(format!(
            "grid `{spec}` must be start:end:step"
        )));
    };
    let parse = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::config(format!("grid `{spec}`: cannot parse `{s}`")))
    };
    let (start, end, step) = (parse(start)?, parse(end)?, parse(step)?);
    if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) || start >= end {
        return Err(Error::config("grid needs 0 <= start < end <= 1"));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::config("grid step must be positive"));
    }
    let mut grid = Vec::new();
    let mut k = 0u32;
    loop {
        let alpha = start + f64::from(k) * step;
        if alpha > end + 1e-9 {
            break;
        }
        grid.push(alpha.min(end));
        k += 1;
    }
    Ok(grid)
}

fn write_and_print(csv: &str, out: Option<&Path>) -> Result<()> {
    print!("{csv}");
    if let Some(path) = out {
        fs::write(path, csv)?;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let dir = resolve_run_dir(&args.out.unwrap_or_else(|| format!("{}-sim", cfg.name)));
    fs::create_dir_all(&dir)?;
    let trace = vanilla_eval_trace(&cfg)?;
    let path = dir.join("trace.jsonl");
    write_jsonl(&path, &trace)?;
    let items = trace.last().map_or(0, |d| d.outcomes.len());
    println!("trace: {} ({} days, {} items)", path.display(), trace.len(), items);
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(sessions) = args.sessions {
        cfg.sessions = sessions;
    }
    if let Some(ablate) = &args.ablate {
        cfg.trainer.ablation = parse_ablate(ablate)?;
    }
    let dir = resolve_run_dir(&args.out.clone().unwrap_or_else(|| cfg.name.clone()));
    let out = run_experiment(&cfg, &dir)?;
    println!("run: {}", out.dir.display());
    println!("sessions: {}", out.sessions_done);
    println!(
        "supervised baseline: loss {:.6} over {} epochs{}",
        out.lstm.final_loss,
        out.lstm.epochs_run,
        if out.lstm.diverged { " (diverged)" } else { "" }
    );
    println!("manifest: {}", out.manifest.combined);
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let agent = Agent::load(&args.checkpoint, cfg.trainer.lr)?;
    let trace: Vec<DayResult> = read_jsonl(&args.trace)?;
    let dir = resolve_run_dir(&args.out);
    fs::create_dir_all(&dir)?;
    let summary = score_trace(&cfg, &agent, &trace, &dir)?;
    if summary.diverged {
        eprintln!("warning: supervised baseline diverged; its rows are unreliable");
    }
    let arm_dirs = run_arms(&cfg, &agent, &dir.join("arms"))?;
    let comparison = compare_arms(&arm_dirs)?;
    let csv = comparison_to_csv(&comparison);
    fs::write(dir.join("comparison.csv"), &csv)?;
    println!("report: {}", dir.display());
    print!("{csv}");
    Ok(())
}

fn sweep_alpha(args: SweepArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let records: Vec<EvalRecord> = read_jsonl(&args.records)?;
    let grid = parse_grid(&args.grid)?;
    let points = alpha_sweep(&records, &grid, &cfg.eval.ndcg_ks)?;
    write_and_print(&sweep_to_csv(&points)?, args.out.as_deref())
}

fn ablate(args: AblateArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(sessions) = args.sessions {
        cfg.sessions = sessions;
    }
    let root = resolve_run_dir(
        &args
            .out
            .clone()
            .unwrap_or_else(|| format!("{}-ablate", cfg.name)),
    );
    let modes = [
        AblationMode::Full,
        AblationMode::NoInherent,
        AblationMode::NoTrend,
        AblationMode::NoRecurrent,
    ];
    let mut summary: Option<String> = None;
    for mode in modes {
        let mut run_cfg = cfg.clone();
        run_cfg.trainer.ablation = mode;
        let dir = root.join(mode.name());
        run_experiment(&run_cfg, &dir)?;
        let table = fs::read_to_string(dir.join("eval/table.csv"))?;
        let mut lines = table.lines();
        let header = lines
            .next()
            .and_then(|h| h.strip_prefix("model,"))
            .ok_or_else(|| Error::format("table.csv is missing its header"))?;
        let policy_row = lines
            .find(|l| l.starts_with("rl_ltv,"))
            .and_then(|l| l.strip_prefix("rl_ltv,"))
            .ok_or_else(|| Error::format("table.csv is missing the rl_ltv row"))?;
        let out = summary.get_or_insert_with(|| format!("ablation,{header}\n"));
        out.push_str(&format!("{},{policy_row}\n", mode.name()));
        println!("{}: done", mode.name());
    }
    let csv = summary.expect("at least one mode ran");
    fs::write(root.join("summary.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let comparison = compare_arms(&args.arms)?;
    write_and_print(&comparison_to_csv(&comparison), args.out.as_deref())
}
