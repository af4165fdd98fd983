use std::collections::{HashMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{clamp_k, DocId, Document, Query, TopKResult};
use crate::error::Result;
use crate::oracle::Oracle;

/// Which comparison edges a listwise ranking contributes to the graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeRecording {
    /// Every implied pair of the ranking.
    #[default]
    AllPairs,
    /// Only consecutive pairs.
    Adjacent,
}

/// Partial comparisons between documents. An edge `u -> v` means `v` beat `u`.
#[derive(Clone, Debug, Default)]
pub struct ComparisonGraph {
    index: HashMap<DocId, usize>,
    ids: Vec<DocId>,
    out: Vec<HashSet<usize>>,
    inc: Vec<Vec<usize>>,
    live_out: Vec<usize>,
    removed: Vec<bool>,
}

impl ComparisonGraph {
    pub fn new(ids: impl IntoIterator<Item = DocId>) -> Self {
        let ids: Vec<DocId> = ids.into_iter().collect();
        let n = ids.len();
        ComparisonGraph {
            index: ids.iter().enumerate().map(|(i, &d)| (d, i)).collect(),
            ids,
            out: vec![HashSet::new(); n],
            inc: vec![Vec::new(); n],
            live_out: vec![0; n],
            removed: vec![false; n],
        }
    }

    fn add_edge(&mut self, loser: usize, winner: usize) {
        if loser != winner && self.out[loser].insert(winner) {
            self.inc[winner].push(loser);
            if !self.removed[winner] {
                self.live_out[loser] += 1;
            }
        }
    }

    /// Records the comparisons implied by a best-first ranking.
    pub fn add_ranking(&mut self, order: &[DocId], recording: EdgeRecording) {
        let idx: Vec<usize> = order.iter().map(|d| self.index[d]).collect();
        match recording {
            EdgeRecording::AllPairs => {
                for (i, &w) in idx.iter().enumerate() {
                    for &l in &idx[i + 1..] {
                        self.add_edge(l, w);
                    }
                }
            }
            EdgeRecording::Adjacent => {
                for pair in idx.windows(2) {
                    self.add_edge(pair[1], pair[0]);
                }
            }
        }
    }

    /// Removes a vertex; edges into it stop counting as live.
    pub fn remove(&mut self, id: DocId) {
        let v = self.index[&id];
        if std::mem::replace(&mut self.removed[v], true) {
            return;
        }
        for &u in &self.inc[v] {
            self.live_out[u] -= 1;
        }
    }

    pub fn contains(&self, id: DocId) -> bool {
        self.index.get(&id).is_some_and(|&v| !self.removed[v])
    }

    /// Out-edges of `id`, including those to removed vertices.
    pub fn out_edges(&self, id: DocId) -> Vec<DocId> {
        let mut out: Vec<DocId> = self.out[self.index[&id]]
            .iter()
            .map(|&w| self.ids[w])
            .collect();
        out.sort_unstable();
        out
    }

    pub fn live_out_degree(&self, id: DocId) -> usize {
        self.live_out[self.index[&id]]
    }

    /// Live vertices that no live vertex has beaten. If an inconsistent oracle
    /// leaves none, the live vertices with the fewest live out-edges.
    pub fn undefeated(&self) -> Vec<DocId> {
        let live = (0..self.ids.len()).filter(|&v| !self.removed[v]);
        let min = live.clone().map(|v| self.live_out[v]).min();
        match min {
            None => Vec::new(),
            Some(m) => live
                .filter(|&v| self.live_out[v] == m)
                .map(|v| self.ids[v])
                .collect(),
        }
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(HashSet::len).sum()
    }

    /// Kahn's algorithm over all vertices and edges, removed or not.
    pub fn is_acyclic(&self) -> bool {
        let n = self.ids.len();
        let mut indeg = vec![0usize; n];
        for outs in &self.out {
            for &w in outs {
                indeg[w] += 1;
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop_front() {
            seen += 1;
            for &w in &self.out[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        seen == n
    }
}

/// One tournament of [`lt_topk_traced`].
#[derive(Clone, Debug, PartialEq)]
pub struct TournamentRecord {
    /// Entrants with their out-edges as they stood when the tournament began.
    pub candidates: Vec<(DocId, Vec<DocId>)>,
    pub winner: DocId,
    pub calls: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TournamentTrace {
    pub tournaments: Vec<TournamentRecord>,
}

/// Ordered top-K by repeated listwise tournaments over a shared comparison
/// graph. Every tournament after the first only admits documents that no
/// remaining document has beaten.
pub fn lt_topk<R: Rng + ?Sized>(
    docs: &[&Document],
    query: &Query,
    k: usize,
    oracle: &Oracle,
    rng: &mut R,
) -> Result<TopKResult> {
    lt_topk_traced(docs, query, k, EdgeRecording::AllPairs, oracle, rng).map(|(r, _)| r)
}

pub fn lt_topk_traced<R: Rng + ?Sized>(
    docs: &[&Document],
    query: &Query,
    k: usize,
    recording: EdgeRecording,
    oracle: &Oracle,
    rng: &mut R,
) -> Result<(TopKResult, TournamentTrace)> {
    let (k_eff, clamped) = clamp_k(k, docs.len())?;
    let by_id: HashMap<DocId, &Document> = docs.iter().map(|d| (d.id, *d)).collect();
    let mut graph = ComparisonGraph::new(docs.iter().map(|d| d.id));
    let mut trace = TournamentTrace::default();
    let mut winners = Vec::with_capacity(k_eff);
    let l = oracle.list_size();

    // The first tournament admits everything in input order, shuffled below.
    let mut entrants: Vec<DocId> = docs.iter().map(|d| d.id).collect();
    for t in 0..k_eff {
        if t > 0 {
            entrants = graph.undefeated();
        }
        let start_calls = oracle.calls();
        let candidates = entrants
            .iter()
            .map(|&id| (id, graph.out_edges(id)))
            .collect();

        let mut round = entrants.clone();
        while round.len() > 1 {
            round.shuffle(rng);
            let bins: Vec<Vec<&Document>> = round
                .chunks(l)
                .map(|c| c.iter().map(|id| by_id[id]).collect())
                .collect();
            let rankings = oracle.rank_many(query, &bins)?;
            round = rankings
                .iter()
                .map(|r| {
                    graph.add_ranking(&r.order, recording);
                    r.order[0]
                })
                .collect();
        }
        let winner = round[0];
        graph.remove(winner);
        winners.push(winner);
        trace.tournaments.push(TournamentRecord {
            candidates,
            winner,
            calls: oracle.calls() - start_calls,
        });
    }
    Ok((TopKResult::ordered(winners, k, clamped), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::testutil::{query, toy};
    use crate::domain::{brute_force_topk, Corpus};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn toy_trace_finds_six_then_five() {
        let c = toy();
        for seed in 0..20 {
            let o = Oracle::perfect(3).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (r, trace) = lt_topk_traced(
                &c.doc_refs(),
                &query(),
                2,
                EdgeRecording::AllPairs,
                &o,
                &mut rng,
            )
            .unwrap();
            assert_eq!(r.ids, vec![DocId(6), DocId(5)]);
            assert_eq!(trace.tournaments[0].calls, 3);
            // 5 lost only to 6, so it always enters the second tournament.
            let second: Vec<DocId> = trace.tournaments[1]
                .candidates
                .iter()
                .map(|c| c.0)
                .collect();
            assert!(second.contains(&DocId(5)));
        }
    }

    #[test]
    fn single_bin_is_one_call() {
        let c = toy();
        let o = Oracle::perfect(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = lt_topk(&c.doc_refs(), &query(), 1, &o, &mut rng).unwrap();
        assert_eq!(r.ids, vec![DocId(6)]);
        assert_eq!(o.calls(), 1);
    }

    #[test]
    fn clamps_k_above_n() {
        let c = toy();
        let o = Oracle::perfect(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = lt_topk(&c.doc_refs(), &query(), 9, &o, &mut rng).unwrap();
        assert!(r.clamped);
        assert_eq!(
            r.ids.iter().map(|d| d.0).collect::<Vec<_>>(),
            vec![6, 5, 4, 3, 2, 1]
        );
    }

    #[test]
    fn later_entrants_lost_only_to_winners() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = Corpus::random_permutation(300, &mut rng).unwrap();
        for recording in [EdgeRecording::AllPairs, EdgeRecording::Adjacent] {
            let o = Oracle::perfect(7).unwrap();
            let (r, trace) =
                lt_topk_traced(&c.doc_refs(), &query(), 12, recording, &o, &mut rng).unwrap();
            assert_eq!(r, brute_force_topk(&c, 12, true).unwrap());
            for (t, rec) in trace.tournaments.iter().enumerate().skip(1) {
                let emitted = &r.ids[..t];
                for (_, outs) in &rec.candidates {
                    assert!(outs.iter().all(|w| emitted.contains(w)));
                }
            }
        }
    }

    #[test]
    fn graph_stays_acyclic_under_perfect_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = Corpus::random_permutation(200, &mut rng).unwrap();
        let o = Oracle::perfect(5).unwrap();
        let refs = c.doc_refs();
        let mut g = ComparisonGraph::new(refs.iter().map(|d| d.id));
        for chunk in refs.chunks(5) {
            g.add_ranking(
                &o.rank(&query(), chunk).unwrap().order,
                EdgeRecording::AllPairs,
            );
        }
        assert!(g.is_acyclic());
        assert_eq!(g.edge_count(), 40 * 10);
    }

    #[test]
    fn cycle_is_detected_and_candidates_fall_back() {
        let ids = [DocId(0), DocId(1), DocId(2)];
        let mut g = ComparisonGraph::new(ids);
        g.add_ranking(&[DocId(0), DocId(1)], EdgeRecording::AllPairs);
        g.add_ranking(&[DocId(1), DocId(2)], EdgeRecording::AllPairs);
        g.add_ranking(&[DocId(2), DocId(0)], EdgeRecording::AllPairs);
        assert!(!g.is_acyclic());
        assert_eq!(g.undefeated().len(), 3);
        g.remove(DocId(0));
        assert_eq!(g.undefeated(), vec![DocId(1)]);
    }
}
