//! Ranking and regression metrics shared by every offline comparison:
//! RMSE/MAE of value predictions, NDCG@K with realized returns as the
//! relevance score, pairwise AUC for click labels, and Spearman rank
//! correlation for sweep curves.

use crate::error::{Error, Result};
use crate::mdp::ItemId;

/// RMSE and MAE between predictions and realizations.
pub fn regression_metrics(pred: &[f64], actual: &[f64]) -> Result<(f64, f64)> {
    if pred.is_empty() {
        return Err(Error::usage("regression metrics on zero records"));
    }
    if pred.len() != actual.len() {
        return Err(Error::usage("prediction/actual length mismatch"));
    }
    let n = pred.len() as f64;
    let mut sq = 0.0;
    let mut ab = 0.0;
    for (p, a) in pred.iter().zip(actual) {
        let d = p - a;
        sq += d * d;
        ab += d.abs();
    }
    Ok(((sq / n).sqrt(), ab / n))
}

/// NDCG@K outcome; `degenerate` marks an all-zero relevance list where the
/// ideal ordering has no gain and the metric is defined as 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ndcg {
    pub value: f64,
    pub degenerate: bool,
}

/// NDCG at cutoff `k` over `(id, score, relevance)` entries. Items are
/// ranked by score descending with ties broken by ascending id, gains are
/// the raw relevances, and positions are discounted by 1/log2(rank+1).
pub fn ndcg_at_k(entries: &[(ItemId, f64, f64)], k: usize) -> Result<Ndcg> {
    if k == 0 || k > entries.len() {
        return Err(Error::usage(format!(
            "ndcg cutoff {k} outside 1..={}",
            entries.len()
        )));
    }
    if let Some((id, s, r)) = entries
        .iter()
        .find(|(_, s, r)| !s.is_finite() || !r.is_finite() || *r < 0.0)
    {
        return Err(Error::domain(format!(
            "ndcg entry for item {id}: score {s}, relevance {r}"
        )));
    }
    let mut by_score: Vec<&(ItemId, f64, f64)> = entries.iter().collect();
    by_score.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut ideal: Vec<f64> = entries.iter().map(|e| e.2).collect();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let discount = |rank: usize| 1.0 / ((rank as f64 + 2.0).log2());
    let dcg: f64 = by_score
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, e)| e.2 * discount(i))
        .sum();
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, r)| r * discount(i)).sum();
    if idcg == 0.0 {
        return Ok(Ndcg {
            value: 1.0,
            degenerate: true,
        });
    }
    Ok(Ndcg {
        value: dcg / idcg,
        degenerate: false,
    })
}

/// Pairwise AUC (Mann-Whitney, ties counted half). `None` when only one
/// class is present, in which case the metric is undefined.
pub fn auc(scored: &[(f64, bool)]) -> Result<Option<f64>> {
    if let Some((s, _)) = scored.iter().find(|(s, _)| !s.is_finite()) {
        return Err(Error::domain(format!("auc score {s} is not finite")));
    }
    let n_pos = scored.iter().filter(|(_, c)| *c).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    // Rank-sum form: sort ascending, assign average ranks to tied scores,
    // then U = R_pos - n_pos(n_pos+1)/2.
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.partial_cmp(&scored[b].0).unwrap());
    let mut ranks = vec![0.0; scored.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let r_pos: f64 = scored
        .iter()
        .zip(&ranks)
        .filter(|((_, c), _)| *c)
        .map(|(_, r)| r)
        .sum();
    let u = r_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(Some(u / (n_pos as f64 * n_neg as f64)))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::usage("spearman length mismatch"));
    }
    if xs.len() < 2 {
        return Err(Error::usage("spearman needs at least two points"));
    }
    let rx = average_ranks(xs)?;
    let ry = average_ranks(ys)?;
    pearson(&rx, &ry)
}

pub(super) fn average_ranks(vals: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain(format!("rank input {v} is not finite")));
    }
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
    let mut ranks = vec![0.0; vals.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && vals[order[j + 1]] == vals[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    Ok(ranks)
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::domain("correlation undefined for constant input"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}
