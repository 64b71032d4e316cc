//! Assembling evaluation records into comparison tables.
//!
//! Every scorer is summarized the same way: ranking quality as the mean
//! per-day NDCG against realized forward returns, plus regression error
//! against those returns for scorers that actually predict them. Rows
//! serialize to CSV with shortest-roundtrip float formatting, so a rerun
//! over the same records produces a byte-identical file.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::eval::metrics::{auc, ndcg_at_k, regression_metrics};
use crate::eval::records::{records_by_day, EvalRecord};
use crate::mdp::ItemId;

/// Mean per-day NDCG@k over the candidate lists large enough to rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdcgSummary {
    pub value: f64,
    /// Days that contributed to the mean.
    pub days_used: usize,
    /// Days whose relevance was all zero (scored as a perfect 1.0).
    pub days_degenerate: usize,
}

/// Average NDCG@k across days, scoring each record with `score_of` and
/// using its realized forward return as relevance. Days with fewer than
/// `k` candidates are skipped; if every day is too small that is a
/// protocol error, not a silent zero.
pub fn mean_ndcg(
    records: &[EvalRecord],
    k: usize,
    mut score_of: impl FnMut(&EvalRecord) -> f64,
) -> Result<NdcgSummary> {
    let mut sum = 0.0;
    let mut used = 0;
    let mut degenerate = 0;
    for (_, cohort) in records_by_day(records) {
        if cohort.len() < k {
            continue;
        }
        let entries: Vec<(ItemId, f64, f64)> =
            cohort.iter().map(|r| (r.item, score_of(r), r.j_actual)).collect();
        let ndcg = ndcg_at_k(&entries, k)?;
        sum += ndcg.value;
        used += 1;
        if ndcg.degenerate {
            degenerate += 1;
        }
    }
    if used == 0 {
        return Err(Error::protocol(format!(
            "no evaluation day has the {k} candidates NDCG@{k} needs"
        )));
    }
    Ok(NdcgSummary {
        value: sum / used as f64,
        days_used: used,
        days_degenerate: degenerate,
    })
}

/// AUC of `score_of` against the same-day click label, pooled over all
/// records. `None` when the window contains a single class.
pub fn pooled_auc(
    records: &[EvalRecord],
    mut score_of: impl FnMut(&EvalRecord) -> f64,
) -> Result<Option<f64>> {
    let scored: Vec<(f64, bool)> = records.iter().map(|r| (score_of(r), r.clicked)).collect();
    auc(&scored)
}

/// One comparison-table row: a scorer's regression error (when it
/// predicts returns at all) and its ranking quality at each cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub name: String,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    /// (k, mean NDCG@k) in the order requested.
    pub ndcg: Vec<(usize, f64)>,
}

/// Build the four-way comparison: relevance-only serving, group-history
/// percentiles, the supervised sequence regressor, and the agent.
/// `lstm_preds` must cover every (item, day) in `records`; `empirical`
/// must cover every item.
pub fn table_rows(
    records: &[EvalRecord],
    lstm_preds: &BTreeMap<(ItemId, u32), f64>,
    empirical: &BTreeMap<ItemId, f64>,
    ks: &[usize],
) -> Result<Vec<MetricsRow>> {
    if records.is_empty() {
        return Err(Error::config("metrics table: no evaluation records"));
    }
    for r in records {
        if !lstm_preds.contains_key(&(r.item, r.day)) {
            return Err(Error::protocol(format!(
                "supervised baseline has no prediction for item {} day {}",
                r.item, r.day
            )));
        }
        if !empirical.contains_key(&r.item) {
            return Err(Error::protocol(format!(
                "empirical baseline has no score for item {}",
                r.item
            )));
        }
    }

    let actual: Vec<f64> = records.iter().map(|r| r.j_actual).collect();
    let lstm_vec: Vec<f64> =
        records.iter().map(|r| lstm_preds[&(r.item, r.day)]).collect();
    let q_vec: Vec<f64> = records.iter().map(|r| r.q_pred).collect();
    let (lstm_rmse, lstm_mae) = regression_metrics(&lstm_vec, &actual)?;
    let (rl_rmse, rl_mae) = regression_metrics(&q_vec, &actual)?;

    let mut rows = Vec::new();
    let specs: [(&str, Option<(f64, f64)>, Box<dyn FnMut(&EvalRecord) -> f64 + '_>); 4] = [
        ("vanilla_ctr", None, Box::new(|r: &EvalRecord| r.y_ctr)),
        (
            "empirical",
            None,
            Box::new(|r: &EvalRecord| empirical[&r.item]),
        ),
        (
            "supervised_lstm",
            Some((lstm_rmse, lstm_mae)),
            Box::new(|r: &EvalRecord| lstm_preds[&(r.item, r.day)]),
        ),
        (
            "rl_ltv",
            Some((rl_rmse, rl_mae)),
            Box::new(|r: &EvalRecord| r.y_rl),
        ),
    ];
    for (name, reg, mut score_of) in specs {
        let mut ndcg = Vec::with_capacity(ks.len());
        for &k in ks {
            ndcg.push((k, mean_ndcg(records, k, &mut score_of)?.value));
        }
        rows.push(MetricsRow {
            name: name.to_string(),
            rmse: reg.map(|r| r.0),
            mae: reg.map(|r| r.1),
            ndcg,
        });
    }
    Ok(rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Serialize rows to CSV. Formatting is the shortest decimal that parses
/// back to the same f64, so equal inputs yield byte-equal files.
pub fn rows_to_csv(rows: &[MetricsRow]) -> Result<String> {
    let first = rows
        .first()
        .ok_or_else(|| Error::config("metrics table: no rows to serialize"))?;
    let ks: Vec<usize> = first.ndcg.iter().map(|(k, _)| *k).collect();
    let mut out = String::from("model,rmse,mae");
    for k in &ks {
        out.push_str(&format!(",ndcg@{k}"));
    }
    out.push('\n');
    for row in rows {
        let row_ks: Vec<usize> = row.ndcg.iter().map(|(k, _)| *k).collect();
        if row_ks != ks {
            return Err(Error::format(format!(
                "row `{}` reports cutoffs {row_ks:?}, header has {ks:?}",
                row.name
            )));
        }
        out.push_str(&row.name);
        out.push(',');
        out.push_str(&fmt_opt(row.rmse));
        out.push(',');
        out.push_str(&fmt_opt(row.mae));
        for (_, v) in &row.ndcg {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}
