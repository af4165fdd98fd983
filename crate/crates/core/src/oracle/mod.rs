//! The listwise ranking oracle.
//!
//! Every algorithm learns about relevance only through [`Oracle`], which wraps a
//! [`RankBackend`] (perfect, noisy or a remote chat model), enforces the list
//! size, repairs malformed output into a permutation, dispatches independent
//! calls of a round concurrently and keeps the call accounting used as the cost
//! measure throughout the crate.

mod noisy;
mod perfect;
pub mod prompt;
mod remote;

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Corpus, DocId, Document, Query, Ranking};
use crate::error::{ListkError, Result};

pub use noisy::{corrupted_scores, NoisyBackend, NoisyOracleParams};
pub use perfect::PerfectBackend;
pub use prompt::{build_prompt, parse_llm_ranking, ChatMessage, ParsedRanking};
pub use remote::{ChatTransport, HttpTransport, RemoteBackend, RemoteOracleParams};

/// One listwise ranking request as seen by a backend.
#[derive(Clone, Copy, Debug)]
pub struct RankRequest<'a> {
    pub query: &'a Query,
    pub docs: &'a [&'a Document],
    /// Known order of the pivots in `docs`, least relevant first. Set only for
    /// bucket-assignment calls.
    pub pivot_order: Option<&'a [DocId]>,
}

/// What a backend returned for one request.
#[derive(Clone, Debug, Default)]
pub struct BackendReply {
    pub order: Vec<DocId>,
    pub retries: u32,
    pub parse_failures: u32,
    /// The backend gave up and returned the input order.
    pub fell_back: bool,
}

impl BackendReply {
    pub fn ok(order: Vec<DocId>) -> Self {
        BackendReply {
            order,
            ..Default::default()
        }
    }
}

/// A source of listwise rankings. Implementations must be callable from many
/// threads at once.
pub trait RankBackend: Send + Sync {
    fn rank(&self, req: &RankRequest<'_>) -> Result<BackendReply>;

    fn name(&self) -> &'static str;
}

/// Snapshot of oracle usage.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleStats {
    pub calls: u64,
    pub total_items: u64,
    /// Backend calls issued by each dispatched batch, in dispatch order.
    pub per_round: Vec<u64>,
    pub retries: u64,
    pub parse_failures: u64,
    pub fallbacks: u64,
}

#[derive(Debug, Default)]
struct StatsRecorder {
    calls: AtomicU64,
    total_items: AtomicU64,
    retries: AtomicU64,
    parse_failures: AtomicU64,
    fallbacks: AtomicU64,
    per_round: Mutex<Vec<u64>>,
}

impl StatsRecorder {
    fn snapshot(&self) -> OracleStats {
        OracleStats {
            calls: self.calls.load(Ordering::SeqCst),
            total_items: self.total_items.load(Ordering::SeqCst),
            per_round: self.per_round.lock().unwrap().clone(),
            retries: self.retries.load(Ordering::SeqCst),
            parse_failures: self.parse_failures.load(Ordering::SeqCst),
            fallbacks: self.fallbacks.load(Ordering::SeqCst),
        }
    }

    fn begin_round(&self, calls: u64) -> usize {
        let mut rounds = self.per_round.lock().unwrap();
        rounds.push(calls);
        rounds.len() - 1
    }
}

#[derive(Serialize)]
struct LogRecord {
    round: usize,
    list_size: usize,
    latency_ms: f64,
    parsed_ok: bool,
}

/// Line-oriented JSON sink for per-call oracle records.
pub struct OracleLog {
    sink: Mutex<Box<dyn Write + Send>>,
}

impl OracleLog {
    pub fn new(sink: Box<dyn Write + Send>) -> Self {
        OracleLog {
            sink: Mutex::new(sink),
        }
    }

    fn write(&self, rec: &LogRecord) {
        let mut sink = self.sink.lock().unwrap();
        // Logging is best effort; a full disk should not abort a ranking run.
        let _ = serde_json::to_writer(&mut *sink, rec)
            .and_then(|_| sink.write_all(b"\n").map_err(serde_json::Error::io));
    }

    pub fn flush(&self) -> Result<()> {
        self.sink.lock().unwrap().flush()?;
        Ok(())
    }
}

/// Result of placing candidates between a sorted set of pivots.
///
/// Bucket `i` means "between pivot `i - 1` and pivot `i`" in ascending pivot
/// order: 0 is below the lowest pivot, `pivots.len()` above the highest.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BucketAssignment {
    /// Aligned with the candidate order of the request.
    pub entries: Vec<(DocId, usize)>,
}

impl BucketAssignment {
    pub fn get(&self, id: DocId) -> Option<usize> {
        self.entries.iter().find(|(d, _)| *d == id).map(|&(_, b)| b)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One bucket-assignment call: pivots in ascending relevance plus candidates.
#[derive(Clone, Debug)]
pub struct BucketJob<'a> {
    pub pivots_sorted: Vec<&'a Document>,
    pub candidates: Vec<&'a Document>,
}

/// Maps a returned ranking (best first) to buckets.
///
/// Only the set of positions occupied by pivots matters: the i-th lowest pivot
/// position is read as the i-th canonical pivot, so a ranking that permutes
/// the pivots is reinterpreted in canonical order and never contradicts it.
pub fn resolve_buckets(
    ranking: &[DocId],
    pivots: &[DocId],
    candidates: &[DocId],
) -> BucketAssignment {
    let pivot_set: HashSet<DocId> = pivots.iter().copied().collect();
    let mut pivots_below = vec![0usize; ranking.len()];
    let mut seen = 0;
    for (i, id) in ranking.iter().enumerate().rev() {
        pivots_below[i] = seen;
        if pivot_set.contains(id) {
            seen += 1;
        }
    }
    let entries = candidates
        .iter()
        .map(|c| {
            let pos = ranking
                .iter()
                .position(|d| d == c)
                .expect("ranking is a permutation of the request");
            (*c, pivots_below[pos])
        })
        .collect();
    BucketAssignment { entries }
}

#[derive(Clone)]
enum Dispatch {
    Sequential,
    Pool(Arc<rayon::ThreadPool>),
}

/// The cost-accounted, size-checked front end to a [`RankBackend`].
#[derive(Clone)]
pub struct Oracle {
    backend: Arc<dyn RankBackend>,
    list_size: usize,
    stats: Arc<StatsRecorder>,
    dispatch: Dispatch,
    log: Option<Arc<OracleLog>>,
}

impl std::fmt::Debug for Oracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Oracle")
            .field("backend", &self.backend.name())
            .field("list_size", &self.list_size)
            .finish()
    }
}

impl Oracle {
    pub fn new(backend: Arc<dyn RankBackend>, list_size: usize) -> Result<Self> {
        if list_size < 2 {
            return Err(ListkError::invalid("list size L must be at least 2"));
        }
        Ok(Oracle {
            backend,
            list_size,
            stats: Arc::default(),
            dispatch: Dispatch::Sequential,
            log: None,
        })
    }

    pub fn perfect(list_size: usize) -> Result<Self> {
        Self::new(Arc::new(PerfectBackend), list_size)
    }

    /// Dispatches the calls of each round on `width` worker threads.
    pub fn with_parallelism(mut self, width: usize) -> Result<Self> {
        self.dispatch = if width <= 1 {
            Dispatch::Sequential
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(width)
                .build()
                .map_err(|e| ListkError::invalid(format!("thread pool: {e}")))?;
            Dispatch::Pool(Arc::new(pool))
        };
        Ok(self)
    }

    pub fn with_log(mut self, log: Arc<OracleLog>) -> Self {
        self.log = Some(log);
        self
    }

    /// A view of the same backend with a smaller list size. Calls made through
    /// the view are counted in the same statistics.
    pub fn limited(&self, list_size: usize) -> Result<Self> {
        if !(2..=self.list_size).contains(&list_size) {
            return Err(ListkError::invalid(format!(
                "list size {list_size} outside [2, {}]",
                self.list_size
            )));
        }
        let mut o = self.clone();
        o.list_size = list_size;
        Ok(o)
    }

    pub fn list_size(&self) -> usize {
        self.list_size
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn stats(&self) -> OracleStats {
        self.stats.snapshot()
    }

    pub fn calls(&self) -> u64 {
        self.stats.calls.load(Ordering::SeqCst)
    }

    fn check_list(&self, docs: &[&Document]) -> Result<()> {
        if docs.is_empty() {
            return Err(ListkError::EmptyList);
        }
        if docs.len() > self.list_size {
            return Err(ListkError::ListTooLong {
                got: docs.len(),
                max: self.list_size,
            });
        }
        let mut seen = HashSet::with_capacity(docs.len());
        for d in docs {
            if !seen.insert(d.id) {
                return Err(ListkError::DuplicateId(d.id));
            }
        }
        Ok(())
    }

    fn map_round<T, R, F>(&self, items: &[T], f: F) -> Result<Vec<R>>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> Result<R> + Sync + Send,
    {
        match &self.dispatch {
            Dispatch::Pool(pool) if items.len() > 1 => {
                pool.install(|| items.par_iter().map(&f).collect())
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Issues one backend call (unless the list is a singleton) and repairs the
    /// reply into a permutation of the input.
    fn invoke(
        &self,
        round: usize,
        query: &Query,
        docs: &[&Document],
        pivot_order: Option<&[DocId]>,
    ) -> Result<Ranking> {
        if docs.len() == 1 {
            return Ok(Ranking::new(vec![docs[0].id]));
        }
        let start = Instant::now();
        let reply = self.backend.rank(&RankRequest {
            query,
            docs,
            pivot_order,
        })?;
        let latency_ms = start.elapsed().as_secs_f64() * 1e3;

        let s = &self.stats;
        s.calls.fetch_add(1, Ordering::SeqCst);
        s.total_items.fetch_add(docs.len() as u64, Ordering::SeqCst);
        s.retries.fetch_add(reply.retries as u64, Ordering::SeqCst);
        s.parse_failures
            .fetch_add(reply.parse_failures as u64, Ordering::SeqCst);
        if reply.fell_back {
            s.fallbacks.fetch_add(1, Ordering::SeqCst);
        }
        if let Some(log) = &self.log {
            log.write(&LogRecord {
                round,
                list_size: docs.len(),
                latency_ms,
                parsed_ok: !reply.fell_back,
            });
        }
        Ok(Ranking::new(complete_permutation(&reply.order, docs)))
    }

    /// Ranks a single list of at most `L` documents.
    pub fn rank(&self, query: &Query, docs: &[&Document]) -> Result<Ranking> {
        let mut out = self.rank_many(query, &[docs.to_vec()])?;
        Ok(out.pop().expect("one list in, one ranking out"))
    }

    /// Ranks independent lists as one round, concurrently when configured.
    pub fn rank_many(&self, query: &Query, lists: &[Vec<&Document>]) -> Result<Vec<Ranking>> {
        for l in lists {
            self.check_list(l)?;
        }
        let calls = lists.iter().filter(|l| l.len() > 1).count() as u64;
        if calls == 0 {
            return Ok(lists.iter().map(|l| Ranking::new(vec![l[0].id])).collect());
        }
        let round = self.stats.begin_round(calls);
        self.map_round(lists, |l| self.invoke(round, query, l, None))
    }

    /// Places `candidates` into the gaps between `pivots_sorted` (ascending
    /// relevance) with a single listwise call.
    pub fn bucket_assign(
        &self,
        query: &Query,
        pivots_sorted: &[&Document],
        candidates: &[&Document],
    ) -> Result<BucketAssignment> {
        let job = BucketJob {
            pivots_sorted: pivots_sorted.to_vec(),
            candidates: candidates.to_vec(),
        };
        let mut out = self.bucket_assign_many(query, &[job])?;
        Ok(out.pop().expect("one job in, one assignment out"))
    }

    /// Runs independent bucket-assignment calls as one round.
    pub fn bucket_assign_many(
        &self,
        query: &Query,
        jobs: &[BucketJob<'_>],
    ) -> Result<Vec<BucketAssignment>> {
        let mut lists = Vec::with_capacity(jobs.len());
        for j in jobs {
            // Best first: pivots from the top, then candidates.
            let mut list: Vec<&Document> = j.pivots_sorted.iter().rev().copied().collect();
            list.extend(j.candidates.iter().copied());
            if !j.candidates.is_empty() {
                self.check_list(&list)?;
            }
            lists.push(list);
        }
        let needs_call =
            |j: &BucketJob<'_>| !j.candidates.is_empty() && !j.pivots_sorted.is_empty();
        let calls = jobs.iter().filter(|j| needs_call(j)).count() as u64;
        let round = if calls > 0 {
            self.stats.begin_round(calls)
        } else {
            0
        };
        let indices: Vec<usize> = (0..jobs.len()).collect();
        self.map_round(&indices, |&i| {
            let job = &jobs[i];
            let cand_ids: Vec<DocId> = job.candidates.iter().map(|d| d.id).collect();
            if !needs_call(job) {
                return Ok(BucketAssignment {
                    entries: cand_ids.into_iter().map(|c| (c, 0)).collect(),
                });
            }
            let pivot_ids: Vec<DocId> = job.pivots_sorted.iter().map(|d| d.id).collect();
            let ranking = self.invoke(round, query, &lists[i], Some(&pivot_ids))?;
            Ok(resolve_buckets(&ranking.order, &pivot_ids, &cand_ids))
        })
    }
}

/// Keeps the first occurrence of each valid id, drops unknown ids and appends
/// missing ones in input order.
fn complete_permutation(order: &[DocId], docs: &[&Document]) -> Vec<DocId> {
    let valid: HashSet<DocId> = docs.iter().map(|d| d.id).collect();
    let mut seen = HashSet::with_capacity(docs.len());
    let mut out: Vec<DocId> = order
        .iter()
        .copied()
        .filter(|id| valid.contains(id) && seen.insert(*id))
        .collect();
    out.extend(docs.iter().map(|d| d.id).filter(|id| !seen.contains(id)));
    out
}

/// Which backend an [`OracleConfig`] builds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Perfect,
    Noisy(NoisyOracleParams),
    Remote(RemoteOracleParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Maximum documents per call.
    pub list_size: usize,
    pub backend: BackendConfig,
}

impl OracleConfig {
    /// Reads a TOML or JSON config, chosen by file extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: OracleConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            _ => toml::from_str(&text).map_err(|e| ListkError::Config(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.list_size < 2 {
            return Err(ListkError::invalid("list size L must be at least 2"));
        }
        if let BackendConfig::Noisy(p) = &self.backend {
            p.validate()?;
        }
        Ok(())
    }

    /// Builds the oracle. The corpus is needed by the noisy backend, which
    /// draws its per-document noise up front.
    pub fn build(&self, corpus: &Corpus) -> Result<Oracle> {
        self.validate()?;
        let backend: Arc<dyn RankBackend> = match &self.backend {
            BackendConfig::Perfect => Arc::new(PerfectBackend),
            BackendConfig::Noisy(p) => Arc::new(NoisyBackend::new(corpus, p)?),
            BackendConfig::Remote(p) => Arc::new(RemoteBackend::http(p)?),
        };
        Oracle::new(backend, self.list_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(scores: &[(u32, f64)]) -> Vec<Document> {
        scores
            .iter()
            .map(|&(i, s)| Document::scored(i, s))
            .collect()
    }

    fn ids(v: &[u32]) -> Vec<DocId> {
        v.iter().map(|&i| DocId(i)).collect()
    }

    fn q() -> Query {
        Query::new("q", "relevance")
    }

    /// Returns a fixed order of ids regardless of input.
    struct Scripted(Vec<DocId>);

    impl RankBackend for Scripted {
        fn rank(&self, _req: &RankRequest<'_>) -> Result<BackendReply> {
            Ok(BackendReply::ok(self.0.clone()))
        }
        fn name(&self) -> &'static str {
            "scripted"
        }
    }

    #[test]
    fn perfect_ranks_descending() {
        let d = docs(&[(2, 2.0), (6, 6.0), (4, 4.0)]);
        let o = Oracle::perfect(3).unwrap();
        let r = o.rank(&q(), &d.iter().collect::<Vec<_>>()).unwrap();
        assert_eq!(r.order, ids(&[6, 4, 2]));
        assert_eq!(o.stats().calls, 1);
        assert_eq!(o.stats().total_items, 3);
    }

    #[test]
    fn singleton_skips_backend() {
        let d = docs(&[(9, 1.0)]);
        let o = Oracle::perfect(3).unwrap();
        let r = o.rank(&q(), &[&d[0]]).unwrap();
        assert_eq!(r.order, ids(&[9]));
        assert_eq!(o.stats().calls, 0);
        assert!(o.stats().per_round.is_empty());
    }

    #[test]
    fn rejects_oversized_and_duplicate_lists() {
        let d = docs(&[(1, 1.0), (2, 2.0), (3, 3.0)]);
        let o = Oracle::perfect(2).unwrap();
        let refs: Vec<_> = d.iter().collect();
        assert!(matches!(
            o.rank(&q(), &refs),
            Err(ListkError::ListTooLong { got: 3, max: 2 })
        ));
        assert!(matches!(
            o.rank(&q(), &[&d[0], &d[0]]),
            Err(ListkError::DuplicateId(_))
        ));
        assert!(Oracle::perfect(1).is_err());
    }

    #[test]
    fn bucket_assign_toy_example() {
        let all = docs(&[(1, 1.0), (2, 2.0), (3, 3.0), (4, 4.0), (5, 5.0), (6, 6.0)]);
        let by = |i: u32| &all[(i - 1) as usize];
        let o = Oracle::perfect(6).unwrap();
        let a = o
            .bucket_assign(&q(), &[by(2), by(6)], &[by(1), by(4), by(5), by(3)])
            .unwrap();
        assert_eq!(a.get(DocId(1)), Some(0));
        assert_eq!(a.get(DocId(3)), Some(1));
        assert_eq!(a.get(DocId(4)), Some(1));
        assert_eq!(a.get(DocId(5)), Some(1));
        assert_eq!(o.stats().calls, 1);
    }

    #[test]
    fn bucket_assign_resolves_contradiction() {
        // Canonical order P1 < P2 (ids 1 < 2). Backend answers P1 > C > P2,
        // i.e. ascending P2 < C < P1.
        let d = docs(&[(1, 0.0), (2, 0.0), (7, 0.0)]);
        let backend = Scripted(ids(&[1, 7, 2]));
        let o = Oracle::new(Arc::new(backend), 3).unwrap();
        let a = o.bucket_assign(&q(), &[&d[0], &d[1]], &[&d[2]]).unwrap();
        assert_eq!(a.get(DocId(7)), Some(1));
    }

    #[test]
    fn bucket_assign_without_candidates_is_free() {
        let d = docs(&[(1, 1.0), (2, 2.0)]);
        let o = Oracle::perfect(3).unwrap();
        let a = o.bucket_assign(&q(), &[&d[0], &d[1]], &[]).unwrap();
        assert!(a.is_empty());
        assert_eq!(o.stats().calls, 0);
    }

    #[test]
    fn malformed_backend_output_is_repaired() {
        let d = docs(&[(1, 0.0), (2, 0.0), (3, 0.0)]);
        let o = Oracle::new(Arc::new(Scripted(ids(&[3, 3, 99]))), 3).unwrap();
        let r = o.rank(&q(), &d.iter().collect::<Vec<_>>()).unwrap();
        assert_eq!(r.order, ids(&[3, 1, 2]));
    }

    #[test]
    fn limited_view_shares_stats() {
        let d = docs(&[(1, 1.0), (2, 2.0)]);
        let o = Oracle::perfect(20).unwrap();
        let pair = o.limited(2).unwrap();
        pair.rank(&q(), &[&d[0], &d[1]]).unwrap();
        assert_eq!(o.stats().calls, 1);
        assert!(o.limited(21).is_err());
    }

    #[test]
    fn parallel_dispatch_matches_sequential() {
        let d: Vec<Document> = (0..40)
            .map(|i| Document::scored(i, ((i * 7) % 40) as f64))
            .collect();
        let lists: Vec<Vec<&Document>> = d.chunks(4).map(|c| c.iter().collect()).collect();
        let seq = Oracle::perfect(4).unwrap();
        let par = Oracle::perfect(4).unwrap().with_parallelism(8).unwrap();
        assert_eq!(
            seq.rank_many(&q(), &lists).unwrap(),
            par.rank_many(&q(), &lists).unwrap()
        );
        assert_eq!(par.stats().per_round, vec![10]);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oracle.toml");
        std::fs::write(
            &path,
            "list_size = 20\n[backend]\nkind = \"noisy\"\nproxy_correlation = 0.8\nseed = 3\n",
        )
        .unwrap();
        let cfg = OracleConfig::load(&path).unwrap();
        assert_eq!(cfg.list_size, 20);
        assert!(matches!(cfg.backend, BackendConfig::Noisy(_)));
    }

    proptest! {
        #[test]
        fn repaired_output_is_always_a_permutation(
            n in 1usize..10,
            reply in proptest::collection::vec(0u32..15, 0..20),
        ) {
            let d: Vec<Document> = (0..n as u32).map(|i| Document::scored(i, 0.0)).collect();
            let refs: Vec<&Document> = d.iter().collect();
            let o = Oracle::new(Arc::new(Scripted(reply.into_iter().map(DocId).collect())), 10).unwrap();
            let r = o.rank(&q(), &refs).unwrap();
            let input: Vec<DocId> = d.iter().map(|x| x.id).collect();
            prop_assert!(r.is_permutation_of(&input));
        }

        #[test]
        fn buckets_agree_with_scores(
            pivots in proptest::collection::btree_set(0u32..1000, 1..5),
            cands in proptest::collection::btree_set(1000u32..2000, 1..8),
        ) {
            // Scores are a shuffled function of the id so pivots and candidates interleave.
            let score = |i: u32| ((i as u64 * 2654435761) % 10007) as f64;
            let pd: Vec<Document> = pivots.iter().map(|&i| Document::scored(i, score(i))).collect();
            let cd: Vec<Document> = cands.iter().map(|&i| Document::scored(i, score(i))).collect();
            let mut ps: Vec<&Document> = pd.iter().collect();
            ps.sort_by(|a, b| crate::domain::relevance_cmp(b, a).unwrap());
            let cs: Vec<&Document> = cd.iter().collect();
            let o = Oracle::perfect(16).unwrap();
            let a = o.bucket_assign(&q(), &ps, &cs).unwrap();
            for c in &cs {
                let expect = ps.iter().filter(|p| crate::domain::relevance_cmp(p, c).unwrap().is_gt()).count();
                prop_assert_eq!(a.get(c.id), Some(expect));
            }
        }
    }
}
