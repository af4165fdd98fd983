use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{lmpq_select_docs, lmpq_sort_docs, PivotConfig, PivotStrategy, ProxyScores};
use crate::domain::{clamp_k, Document, Query, TopKResult};
use crate::error::{ListkError, Result};
use crate::oracle::Oracle;

/// Quickselect then quicksort with one pivot and lists of two: the
/// pairwise-comparison baseline.
pub fn pairwise_baseline<R: Rng + ?Sized>(
    docs: &[&Document],
    query: &Query,
    k: usize,
    oracle: &Oracle,
    rng: &mut R,
) -> Result<TopKResult> {
    let (_, clamped) = clamp_k(k, docs.len())?;
    let pairwise = oracle.limited(2)?;
    let cfg = PivotConfig::new(1);
    let chosen = lmpq_select_docs(docs, query, k, &cfg, &pairwise, None, rng)?;
    let sorted = lmpq_sort_docs(&chosen, query, &cfg, &pairwise, None, rng)?;
    Ok(TopKResult::ordered(
        sorted.iter().map(|d| d.id).collect(),
        k,
        clamped,
    ))
}

/// Re-sorts the first `few` entries of a best-first list with pairwise calls.
///
/// Pivots are the medians of the incoming order, so no randomness is needed
/// and an already correct prefix costs about `few * log2(few)` calls.
pub fn top_few_refine<'a>(
    ranking: &[&'a Document],
    query: &Query,
    oracle: &Oracle,
    few: usize,
) -> Result<Vec<&'a Document>> {
    if few > ranking.len() {
        return Err(ListkError::invalid(format!(
            "cannot refine the top {few} of a ranking of {}",
            ranking.len()
        )));
    }
    if few <= 1 {
        return Ok(ranking.to_vec());
    }
    let prefix = &ranking[..few];
    let by_position = ProxyScores(
        prefix
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id, -(i as f64)))
            .collect(),
    );
    let cfg = PivotConfig::new(1).with_strategy(PivotStrategy::Proxy);
    // Proxy pivots never draw from the generator.
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let mut out = lmpq_sort_docs(
        prefix,
        query,
        &cfg,
        &oracle.limited(2)?,
        Some(&by_position),
        &mut unused,
    )?;
    out.extend_from_slice(&ranking[few..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::testutil::{query, toy};
    use crate::domain::{brute_force_topk, Corpus, DocId};

    #[test]
    fn baseline_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1usize, 2, 3, 10, 120] {
            let c = Corpus::random_permutation(n, &mut rng).unwrap();
            for k in [1, n.div_ceil(2), n] {
                let o = Oracle::perfect(20).unwrap();
                let r = pairwise_baseline(&c.doc_refs(), &query(), k, &o, &mut rng).unwrap();
                assert_eq!(r, brute_force_topk(&c, k, true).unwrap());
                assert_eq!(o.stats().total_items, 2 * o.calls());
                if n <= 2 {
                    assert!(o.calls() <= 1);
                }
            }
        }
    }

    #[test]
    fn refine_fixes_a_shuffled_prefix() {
        let c = toy();
        let get = |i: u32| c.get(DocId(i)).unwrap();
        let input = vec![get(4), get(6), get(5), get(1)];
        let o = Oracle::perfect(3).unwrap();
        let out = top_few_refine(&input, &query(), &o, 3).unwrap();
        let ids: Vec<u32> = out.iter().map(|d| d.id.0).collect();
        assert_eq!(ids, vec![6, 5, 4, 1]);
        assert_eq!(o.stats().total_items, 2 * o.calls());
    }

    #[test]
    fn refine_one_is_a_no_op() {
        let c = toy();
        let o = Oracle::perfect(3).unwrap();
        let refs = c.doc_refs();
        assert_eq!(top_few_refine(&refs, &query(), &o, 1).unwrap(), refs);
        assert_eq!(o.calls(), 0);
    }
}
