use rand::Rng;

use super::buckets::{bucket_sort_rounds, BucketRound};
use super::{docs_in_order, select_pivots, PivotConfig, ProxyScores};
use crate::domain::{Document, Query, Ranking};
use crate::error::Result;
use crate::oracle::Oracle;

enum Segment<'a> {
    /// Final, best first.
    Done(Vec<&'a Document>),
    Todo(Vec<&'a Document>),
}

/// Full descending sort by listwise multi-pivot quicksort.
pub fn lmpq_sort<R: Rng + ?Sized>(
    docs: &[&Document],
    query: &Query,
    cfg: &PivotConfig,
    oracle: &Oracle,
    proxy: Option<&ProxyScores>,
    rng: &mut R,
) -> Result<Ranking> {
    let sorted = lmpq_sort_docs(docs, query, cfg, oracle, proxy, rng)?;
    Ok(Ranking::new(sorted.iter().map(|d| d.id).collect()))
}

/// Sorts best first. The recursion runs level by level so that the calls of
/// all segments at the same depth share one round. Pivots are drawn segment by
/// segment from the top, keeping a seeded run replayable.
pub fn lmpq_sort_docs<'a, R: Rng + ?Sized>(
    docs: &[&'a Document],
    query: &Query,
    cfg: &PivotConfig,
    oracle: &Oracle,
    proxy: Option<&ProxyScores>,
    rng: &mut R,
) -> Result<Vec<&'a Document>> {
    let l = oracle.list_size();
    cfg.validate(l)?;
    let mut segments = vec![Segment::Todo(docs.to_vec())];

    loop {
        // Lists for this level's single rank round: base cases and pivot sets.
        let mut lists: Vec<Vec<&'a Document>> = Vec::new();
        // Per pending segment: (segment index, pivots, non-pivots) or a base case.
        let mut splits: Vec<(usize, Option<Vec<&'a Document>>)> = Vec::new();
        for (s, seg) in segments.iter().enumerate() {
            let Segment::Todo(items) = seg else { continue };
            if items.len() <= l {
                lists.push(items.clone());
                splits.push((s, None));
            } else {
                let picked = select_pivots(items, cfg.pivots, cfg.strategy, None, proxy, rng)?;
                let mut is_pivot = vec![false; items.len()];
                for &i in &picked {
                    is_pivot[i] = true;
                }
                lists.push(picked.iter().map(|&i| items[i]).collect());
                let others = items
                    .iter()
                    .zip(&is_pivot)
                    .filter(|(_, &p)| !p)
                    .map(|(d, _)| *d)
                    .collect();
                splits.push((s, Some(others)));
            }
        }
        if lists.is_empty() {
            break;
        }
        let rankings = oracle.rank_many(query, &lists)?;

        let mut jobs = Vec::new();
        let mut job_segments = Vec::new();
        let mut replaced: Vec<Option<Vec<Segment<'a>>>> =
            (0..segments.len()).map(|_| None).collect();
        for ((s, others), (list, ranking)) in splits.into_iter().zip(lists.iter().zip(&rankings)) {
            let best_first = docs_in_order(&ranking.order, list);
            match others {
                None => replaced[s] = Some(vec![Segment::Done(best_first)]),
                Some(others) => {
                    let mut asc = best_first;
                    asc.reverse();
                    jobs.push(BucketRound {
                        candidates: others,
                        pivots: asc,
                        k_remaining: usize::MAX,
                    });
                    job_segments.push(s);
                }
            }
        }
        let bucketed = bucket_sort_rounds(query, &jobs, cfg.physical_pivots, oracle)?;
        for ((s, job), b) in job_segments.into_iter().zip(&jobs).zip(bucketed) {
            let mut parts = Vec::with_capacity(2 * job.pivots.len() + 1);
            for (i, bucket) in b.buckets.into_iter().enumerate().rev() {
                if !bucket.is_empty() {
                    parts.push(Segment::Todo(bucket));
                }
                if i > 0 {
                    parts.push(Segment::Done(vec![job.pivots[i - 1]]));
                }
            }
            replaced[s] = Some(parts);
        }

        segments = segments
            .into_iter()
            .zip(replaced)
            .flat_map(|(seg, rep)| rep.unwrap_or_else(|| vec![seg]))
            .collect();
    }

    Ok(segments
        .into_iter()
        .flat_map(|seg| match seg {
            Segment::Done(v) | Segment::Todo(v) => v,
        })
        .collect())
}
