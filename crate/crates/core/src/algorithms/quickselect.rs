use rand::Rng;

use super::buckets::bucket_sort_round;
use super::{docs_in_order, select_pivots, PivotConfig, ProxyScores};
use crate::domain::{clamp_k, Document, Query, TopKResult};
use crate::error::Result;
use crate::oracle::Oracle;

/// Unordered top-K by listwise multi-pivot quickselect. Exact under a
/// consistent oracle; only the number of calls is random.
pub fn lmpq_select<R: Rng + ?Sized>(
    docs: &[&Document],
    query: &Query,
    k: usize,
    cfg: &PivotConfig,
    oracle: &Oracle,
    proxy: Option<&ProxyScores>,
    rng: &mut R,
) -> Result<TopKResult> {
    let (_, clamped) = clamp_k(k, docs.len())?;
    let chosen = lmpq_select_docs(docs, query, k, cfg, oracle, proxy, rng)?;
    Ok(TopKResult::unordered(
        chosen.iter().map(|d| d.id).collect(),
        k,
        clamped,
    ))
}

/// Like [`lmpq_select`] but returns the chosen documents, for chaining into a
/// sort. Their order carries no meaning.
pub fn lmpq_select_docs<'a, R: Rng + ?Sized>(
    docs: &[&'a Document],
    query: &Query,
    k: usize,
    cfg: &PivotConfig,
    oracle: &Oracle,
    proxy: Option<&ProxyScores>,
    rng: &mut R,
) -> Result<Vec<&'a Document>> {
    let l = oracle.list_size();
    cfg.validate(l)?;
    let (mut k_rem, _) = clamp_k(k, docs.len())?;
    let mut solution: Vec<&'a Document> = Vec::with_capacity(k_rem);
    let mut cands = docs.to_vec();

    while k_rem > 0 {
        if k_rem == cands.len() {
            solution.append(&mut cands);
            break;
        }
        if cands.len() <= l {
            let ranking = oracle.rank(query, &cands)?;
            solution.extend(docs_in_order(&ranking.order[..k_rem], &cands));
            break;
        }

        let picked = select_pivots(&cands, cfg.pivots, cfg.strategy, Some(k_rem), proxy, rng)?;
        let mut is_pivot = vec![false; cands.len()];
        for &i in &picked {
            is_pivot[i] = true;
        }
        let pivots: Vec<&Document> = picked.iter().map(|&i| cands[i]).collect();
        let others: Vec<&Document> = cands
            .iter()
            .zip(&is_pivot)
            .filter(|(_, &p)| !p)
            .map(|(d, _)| *d)
            .collect();
        let mut pivots_asc = docs_in_order(&oracle.rank(query, &pivots)?.order, &pivots);
        pivots_asc.reverse();

        let mut b = bucket_sort_round(
            query,
            &others,
            &pivots_asc,
            cfg.physical_pivots,
            k_rem,
            cfg.early_stopping,
            oracle,
        )?;

        // Walk down from the top bucket until the one straddling K.
        let mut next = None;
        for i in (0..=cfg.pivots).rev() {
            let bucket = std::mem::take(&mut b.buckets[i]);
            if bucket.len() > k_rem {
                next = Some(bucket);
                break;
            }
            k_rem -= bucket.len();
            solution.extend(bucket);
            if k_rem == 0 {
                break;
            }
            if i > 0 {
                solution.push(pivots_asc[i - 1]);
                k_rem -= 1;
                if k_rem == 0 {
                    break;
                }
            }
        }
        match next {
            Some(bucket) => cands = bucket,
            None => break,
        }
    }
    Ok(solution)
}
