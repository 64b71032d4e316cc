//! Sweeping the blend weight between the relevance score and the agent's
//! affinity score.
//!
//! Each grid point fixes one blend weight for the whole evaluation set
//! and measures two opposing qualities: how well the blended score still
//! predicts same-day clicks (AUC) and how well it ranks items by realized
//! forward return (NDCG). Walking the weight from 0 to 1 traces the
//! trade-off curve a deployment would tune along.

use crate::error::{Error, Result};
use crate::eval::records::EvalRecord;
use crate::eval::report::{mean_ndcg, pooled_auc};
use crate::rank::mix;

/// Metrics of one fixed blend weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    /// Click AUC of the blended score; `None` when the evaluation window
    /// has a single click class.
    pub auc: Option<f64>,
    /// (k, mean per-day NDCG@k) of the blended score against realized
    /// returns.
    pub ndcg: Vec<(usize, f64)>,
}

/// Inclusive grid 0, step, 2*step, ..., 1.
pub fn alpha_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) || !step.is_finite() {
        return Err(Error::config(format!("sweep step {step} out of (0, 1]")));
    }
    let n = (1.0 / step).round() as usize;
    Ok((0..=n).map(|i| (i as f64 * step).min(1.0)).collect())
}

/// Evaluate the blended score at every grid point.
pub fn alpha_sweep(
    records: &[EvalRecord],
    grid: &[f64],
    ks: &[usize],
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::config("sweep: empty grid"));
    }
    if ks.is_empty() {
        return Err(Error::config("sweep: no NDCG cutoffs"));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &alpha in grid {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::config(format!("sweep alpha {alpha} out of [0, 1]")));
        }
        let auc = pooled_auc(records, |r| mix(r.y_ctr, r.y_rl, alpha))?;
        let mut ndcg = Vec::with_capacity(ks.len());
        for &k in ks {
            let summary = mean_ndcg(records, k, |r| mix(r.y_ctr, r.y_rl, alpha))?;
            ndcg.push((k, summary.value));
        }
        points.push(SweepPoint { alpha, auc, ndcg });
    }
    Ok(points)
}

/// CSV view of a sweep, one line per grid point.
pub fn sweep_to_csv(points: &[SweepPoint]) -> Result<String> {
    let first = points.first().ok_or_else(|| Error::config("sweep: no points"))?;
    let ks: Vec<usize> = first.ndcg.iter().map(|(k, _)| *k).collect();
    let mut out = String::from("alpha,auc");
    for k in &ks {
        out.push_str(&format!(",ndcg@{k}"));
    }
    out.push('\n');
    for p in points {
        let row_ks: Vec<usize> = p.ndcg.iter().map(|(k, _)| *k).collect();
        if row_ks != ks {
            return Err(Error::format(format!(
                "sweep point alpha={} reports cutoffs {row_ks:?}, header has {ks:?}",
                p.alpha
            )));
        }
        out.push_str(&p.alpha.to_string());
        out.push(',');
        if let Some(a) = p.auc {
            out.push_str(&a.to_string());
        }
        for (_, v) in &p.ndcg {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}
