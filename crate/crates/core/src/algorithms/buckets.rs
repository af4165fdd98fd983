use crate::domain::{Document, Query};
use crate::error::{ListkError, Result};
use crate::oracle::{BucketJob, Oracle};

/// Candidates partitioned by a sorted set of pivots.
#[derive(Clone, Debug, PartialEq)]
pub struct Buckets<'a> {
    /// `pivots + 1` buckets in ascending relevance: bucket `i` lies between
    /// pivot `i - 1` and pivot `i`. Candidates keep their input order.
    pub buckets: Vec<Vec<&'a Document>>,
    /// After early stopping, bucket `floor` holds every candidate below pivot
    /// `floor` without finer placement. Zero when bucketing is exact.
    pub floor: usize,
}

/// One partitioning job: candidates against pivots in ascending relevance.
pub(crate) struct BucketRound<'a> {
    pub candidates: Vec<&'a Document>,
    pub pivots: Vec<&'a Document>,
    /// Early stopping threshold; `usize::MAX` disables it.
    pub k_remaining: usize,
}

struct JobState {
    /// Pivot index ranges, highest group first.
    groups: Vec<(usize, usize)>,
    step: usize,
    unresolved: Vec<usize>,
    bucket_of: Vec<usize>,
    resolved: usize,
    done: bool,
    floor: usize,
}

/// Partitions each job's candidates. Pivot groups of size `physical` are
/// compared from the top down and each group only sees the candidates that
/// fell below every group before it. Calls from all jobs at the same group
/// step form one dispatched round.
pub(crate) fn bucket_sort_rounds<'a>(
    query: &Query,
    jobs: &[BucketRound<'a>],
    physical: usize,
    oracle: &Oracle,
) -> Result<Vec<Buckets<'a>>> {
    if physical == 0 {
        return Err(ListkError::invalid(
            "physical pivot count must be at least 1",
        ));
    }
    let list_size = oracle.list_size();
    let mut states: Vec<JobState> = jobs
        .iter()
        .map(|j| {
            let mut groups = Vec::new();
            let mut hi = j.pivots.len();
            while hi > 0 {
                let lo = hi.saturating_sub(physical);
                groups.push((lo, hi));
                hi = lo;
            }
            JobState {
                done: groups.is_empty() || j.candidates.is_empty(),
                groups,
                step: 0,
                unresolved: (0..j.candidates.len()).collect(),
                bucket_of: vec![0; j.candidates.len()],
                resolved: 0,
                floor: 0,
            }
        })
        .collect();

    loop {
        let mut calls: Vec<BucketJob<'a>> = Vec::new();
        let mut owners: Vec<(usize, Vec<usize>)> = Vec::new();
        for (j, st) in states.iter().enumerate().filter(|(_, s)| !s.done) {
            let (lo, hi) = st.groups[st.step];
            let group = &jobs[j].pivots[lo..hi];
            if group.len() >= list_size {
                return Err(ListkError::invalid("pivot group does not fit in one call"));
            }
            for chunk in st.unresolved.chunks(list_size - group.len()) {
                calls.push(BucketJob {
                    pivots_sorted: group.to_vec(),
                    candidates: chunk.iter().map(|&c| jobs[j].candidates[c]).collect(),
                });
                owners.push((j, chunk.to_vec()));
            }
        }
        if owners.is_empty() {
            break;
        }
        let assignments = oracle.bucket_assign_many(query, &calls)?;

        let mut next_unresolved: Vec<Vec<usize>> = vec![Vec::new(); states.len()];
        for ((j, chunk), a) in owners.iter().zip(assignments) {
            let st = &mut states[*j];
            let lo = st.groups[st.step].0;
            for (&c, &(_, local)) in chunk.iter().zip(&a.entries) {
                if local == 0 && lo > 0 {
                    next_unresolved[*j].push(c);
                } else {
                    st.bucket_of[c] = lo + local;
                    st.resolved += 1;
                }
            }
        }
        for (j, st) in states.iter_mut().enumerate().filter(|(_, s)| !s.done) {
            let lo = st.groups[st.step].0;
            st.unresolved = std::mem::take(&mut next_unresolved[j]);
            st.step += 1;
            let pivots_at_or_above = jobs[j].pivots.len() - lo;
            if st.unresolved.is_empty() || st.step == st.groups.len() {
                st.done = true;
            } else if st.resolved + pivots_at_or_above >= jobs[j].k_remaining {
                // Enough documents sit at or above pivot `lo`; the rest only
                // need to be known to lie below it.
                for &c in &st.unresolved {
                    st.bucket_of[c] = lo;
                }
                st.floor = lo;
                st.done = true;
            }
        }
    }

    Ok(jobs
        .iter()
        .zip(states)
        .map(|(j, st)| {
            let mut buckets = vec![Vec::new(); j.pivots.len() + 1];
            for (c, &b) in st.bucket_of.iter().enumerate() {
                buckets[b].push(j.candidates[c]);
            }
            Buckets {
                buckets,
                floor: st.floor,
            }
        })
        .collect())
}

/// Partitions `candidates` around `pivots_sorted` (ascending relevance).
///
/// With `early_stopping`, lower pivot groups are skipped once at least
/// `k_remaining` documents (candidates plus pivots) are known to lie at or
/// above the current group's lowest pivot.
pub fn bucket_sort_round<'a>(
    query: &Query,
    candidates: &[&'a Document],
    pivots_sorted: &[&'a Document],
    physical: usize,
    k_remaining: usize,
    early_stopping: bool,
    oracle: &Oracle,
) -> Result<Buckets<'a>> {
    let job = BucketRound {
        candidates: candidates.to_vec(),
        pivots: pivots_sorted.to_vec(),
        k_remaining: if early_stopping {
            k_remaining
        } else {
            usize::MAX
        },
    };
    let mut out = bucket_sort_rounds(query, &[job], physical, oracle)?;
    Ok(out.pop().expect("one job in, one result out"))
}
