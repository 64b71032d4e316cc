//! The experiment shell: declarative run configs, a resumable end-to-end
//! driver, sealed artifact directories, and the two-arm serving
//! comparison. A run is a pure function of its config; artifact
//! directories carry a content manifest so reproducibility reduces to
//! comparing one digest.

pub mod arms;
pub mod config;
pub mod manifest;
pub mod run;

pub use arms::{
    compare_arms, comparison_to_csv, run_arms, ArmComparison, ArmRecord, ArmSummary, OutcomeRow,
};
pub use config::{ArmsConfig, EvalPhaseConfig, ExperimentConfig, FORMAT_VERSION};
pub use manifest::{sha256_file, Manifest, ManifestEntry};
pub use run::{
    out_root, read_jsonl, resolve_run_dir, run_experiment, score_trace, train_sessions,
    vanilla_eval_trace, write_jsonl, RunOutcome, MANIFEST_PATHS,
};
