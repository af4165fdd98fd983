//! Retrieval quality metrics: Recall@K, NDCG@K and Spearman rank correlation.

use std::collections::{BTreeSet, HashMap};

use super::{DocId, Ranking, TopKResult};
use crate::error::{ListkError, Result};

/// Fraction of `truth` recovered by `result`.
pub fn recall_at_k(result: &TopKResult, truth: &TopKResult) -> Result<f64> {
    if truth.ids.is_empty() {
        return Err(ListkError::UndefinedMetric("recall with K = 0".into()));
    }
    let truth_set = truth.id_set();
    let hits = result.id_set().intersection(&truth_set).count();
    Ok(hits as f64 / truth_set.len() as f64)
}

/// NDCG over the first `k` entries of `result`, with log2(rank + 1) discount.
///
/// Ids absent from `gains` count as zero gain.
pub fn ndcg_at_k(result: &[DocId], gains: &HashMap<DocId, f64>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(ListkError::UndefinedMetric("NDCG with K = 0".into()));
    }
    if let Some((id, g)) = gains.iter().find(|(_, g)| g.is_nan() || **g < 0.0) {
        return Err(ListkError::UndefinedMetric(format!(
            "negative or NaN gain {g} for document {id}"
        )));
    }
    let dcg = |gs: &mut dyn Iterator<Item = f64>| -> f64 {
        gs.take(k)
            .enumerate()
            .map(|(i, g)| g / ((i + 2) as f64).log2())
            .sum()
    };
    let mut ideal_gains: Vec<f64> = gains.values().copied().collect();
    ideal_gains.sort_by(|a, b| b.total_cmp(a));
    let ideal = dcg(&mut ideal_gains.into_iter());
    if ideal <= 0.0 {
        return Err(ListkError::UndefinedMetric(
            "all gains are zero; ideal DCG is zero".into(),
        ));
    }
    let actual = dcg(&mut result
        .iter()
        .map(|id| gains.get(id).copied().unwrap_or(0.0)));
    Ok(actual / ideal)
}

/// Spearman correlation between two full rankings of the same id set.
pub fn spearman(result: &Ranking, truth: &Ranking) -> Result<f64> {
    let n = truth.len();
    if n < 2 {
        return Err(ListkError::UndefinedMetric(
            "Spearman needs at least two items".into(),
        ));
    }
    let a: BTreeSet<_> = result.order.iter().collect();
    let b: BTreeSet<_> = truth.order.iter().collect();
    if result.len() != n || a.len() != n || a != b {
        return Err(ListkError::UndefinedMetric(
            "rankings cover different id sets".into(),
        ));
    }
    let truth_pos: HashMap<DocId, usize> = truth
        .order
        .iter()
        .enumerate()
        .map(|(i, &d)| (d, i))
        .collect();
    let d2: f64 = result
        .order
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let diff = i as f64 - truth_pos[d] as f64;
            diff * diff
        })
        .sum();
    let n = n as f64;
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}
