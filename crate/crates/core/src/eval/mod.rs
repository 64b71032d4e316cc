//! Offline evaluation of trained policies against reference scorers.
//!
//! The pipeline runs in stages: [`records`] rolls a trained agent along a
//! simulation trace and materializes one record per (item, day) with
//! scores, click labels, and realized forward returns; [`metrics`] holds
//! the metric primitives (RMSE/MAE, NDCG, AUC, Spearman); [`baselines`]
//! provides the comparison scorers; [`sweep`] traces the click-versus-
//! return trade-off of the blended score; [`report`] assembles it all
//! into deterministic comparison tables.

pub mod baselines;
pub mod metrics;
pub mod records;
pub mod report;
pub mod sweep;

pub use baselines::{
    empirical_scores, group_history, training_sequences, EmpiricalWeights, GroupSample,
    LabeledSequence, LstmBaseline, TrainSummary,
};
pub use metrics::{auc, ndcg_at_k, regression_metrics, spearman, Ndcg};
pub use records::{build_records, records_by_day, EvalRecord, EvalSetConfig};
pub use report::{mean_ndcg, pooled_auc, rows_to_csv, table_rows, MetricsRow, NdcgSummary};
pub use sweep::{alpha_grid, alpha_sweep, sweep_to_csv, SweepPoint};
