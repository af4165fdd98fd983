use rand::seq::SliceRandom;
use rand::Rng;

use super::{docs_in_order, FilterConfig};
use crate::domain::{Document, Query};
use crate::error::Result;
use crate::oracle::Oracle;

/// Tournament filter: shuffle into bins of `L`, rank each bin, keep the top
/// `S` of every bin. Repeats for `cfg.rounds` rounds.
///
/// `S >= L` keeps everything and makes no calls. The last bin of a round may
/// be smaller than `L`; a singleton bin survives without a call.
pub fn lt_filter<'a, R: Rng + ?Sized>(
    docs: &[&'a Document],
    query: &Query,
    cfg: &FilterConfig,
    oracle: &Oracle,
    rng: &mut R,
) -> Result<Vec<&'a Document>> {
    cfg.validate()?;
    let l = oracle.list_size();
    let mut current = docs.to_vec();
    if cfg.survivors >= l {
        return Ok(current);
    }
    for _ in 0..cfg.rounds {
        current.shuffle(rng);
        let bins: Vec<Vec<&'a Document>> = current.chunks(l).map(|c| c.to_vec()).collect();
        current = filter_bins(&bins, query, cfg.survivors, oracle)?;
    }
    Ok(current)
}

/// One filter round over fixed bins.
pub(crate) fn filter_bins<'a>(
    bins: &[Vec<&'a Document>],
    query: &Query,
    survivors: usize,
    oracle: &Oracle,
) -> Result<Vec<&'a Document>> {
    let rankings = oracle.rank_many(query, bins)?;
    let mut out = Vec::new();
    for (bin, ranking) in bins.iter().zip(rankings) {
        let keep = survivors.min(bin.len());
        out.extend(docs_in_order(&ranking.order[..keep], bin));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::testutil::{query, toy};
    use crate::domain::Corpus;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn toy_bins_keep_top_two() {
        let c = toy();
        let refs = c.doc_refs();
        let bins = vec![refs[..3].to_vec(), refs[3..].to_vec()];
        let o = Oracle::perfect(3).unwrap();
        let out = filter_bins(&bins, &query(), 2, &o).unwrap();
        let ids: Vec<u32> = out.iter().map(|d| d.id.0).collect();
        assert_eq!(ids, vec![6, 4, 5, 3]);
        assert_eq!(o.calls(), 2);
    }

    #[test]
    fn survivors_at_least_l_is_identity() {
        let c = toy();
        let o = Oracle::perfect(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = lt_filter(&c.doc_refs(), &query(), &FilterConfig::new(3), &o, &mut rng).unwrap();
        assert_eq!(out, c.doc_refs());
        assert_eq!(o.calls(), 0);
    }

    #[test]
    fn call_count_is_bin_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = Corpus::random_permutation(5183, &mut rng).unwrap();
        let o = Oracle::perfect(20).unwrap();
        let out = lt_filter(&c.doc_refs(), &query(), &FilterConfig::new(1), &o, &mut rng).unwrap();
        assert_eq!(o.calls(), 260);
        assert_eq!(out.len(), 260);
        let best = c
            .documents()
            .iter()
            .max_by(|a, b| a.true_score.unwrap().total_cmp(&b.true_score.unwrap()))
            .unwrap();
        assert!(out.iter().any(|d| d.id == best.id));
    }

    #[test]
    fn multiple_rounds_shrink_further() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = Corpus::random_permutation(400, &mut rng).unwrap();
        let o = Oracle::perfect(10).unwrap();
        let cfg = FilterConfig {
            survivors: 2,
            rounds: 2,
        };
        let out = lt_filter(&c.doc_refs(), &query(), &cfg, &o, &mut rng).unwrap();
        assert_eq!(o.calls(), 40 + 8);
        assert_eq!(out.len(), 16);
    }
}
