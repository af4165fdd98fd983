//! Core data model: documents, corpora, rankings and top-K results, plus the
//! brute-force ground truth used to check every algorithm.

pub mod io;
pub mod metrics;

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ListkError, Result};

pub use io::ExternalId;
pub use metrics::{ndcg_at_k, recall_at_k, spearman};

/// Internal document identifier, assigned densely at ingestion in file order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(pub u32);

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for DocId {
    fn from(v: u32) -> Self {
        DocId(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: DocId,
    pub text: String,
    pub true_score: Option<f64>,
}

impl Document {
    pub fn new(id: impl Into<DocId>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            true_score: None,
        }
    }

    pub fn scored(id: impl Into<DocId>, score: f64) -> Self {
        Document {
            id: id.into(),
            text: String::new(),
            true_score: Some(score),
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.true_score = Some(score);
        self
    }
}

/// A natural-language ranking criterion.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Query {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// Ground-truth relevance order: descending score, ties broken by ascending id.
///
/// Both documents must carry a score.
pub fn relevance_cmp(a: &Document, b: &Document) -> Result<Ordering> {
    let sa = a.true_score.ok_or(ListkError::MissingScore(a.id))?;
    let sb = b.true_score.ok_or(ListkError::MissingScore(b.id))?;
    Ok(sb.total_cmp(&sa).then(a.id.cmp(&b.id)))
}

/// An ordered, non-empty collection of documents with unique ids.
#[derive(Clone, Debug)]
pub struct Corpus {
    documents: Vec<Document>,
    index: HashMap<DocId, usize>,
    external_ids: Option<Vec<ExternalId>>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        if documents.is_empty() {
            return Err(ListkError::EmptyCorpus);
        }
        let scored = documents.iter().filter(|d| d.true_score.is_some()).count();
        if scored != 0 && scored != documents.len() {
            return Err(ListkError::PartialScores);
        }
        let mut index = HashMap::with_capacity(documents.len());
        for (i, d) in documents.iter().enumerate() {
            if index.insert(d.id, i).is_some() {
                return Err(ListkError::DuplicateId(d.id));
            }
        }
        Ok(Corpus {
            documents,
            index,
            external_ids: None,
        })
    }

    /// Builds a corpus whose document `i` has id `i` and the given score.
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        Self::new(
            scores
                .iter()
                .enumerate()
                .map(|(i, &s)| Document::scored(i as u32, s))
                .collect(),
        )
    }

    /// `n` documents whose scores are a uniformly random permutation of `1..=n`.
    pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let mut scores: Vec<f64> = (1..=n).map(|s| s as f64).collect();
        scores.shuffle(rng);
        Self::from_scores(&scores)
    }

    pub(crate) fn with_external_ids(mut self, ids: Vec<ExternalId>) -> Self {
        debug_assert_eq!(ids.len(), self.documents.len());
        self.external_ids = Some(ids);
        self
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn doc_refs(&self) -> Vec<&Document> {
        self.documents.iter().collect()
    }

    pub fn get(&self, id: DocId) -> Option<&Document> {
        self.index.get(&id).map(|&i| &self.documents[i])
    }

    pub fn is_scored(&self) -> bool {
        self.documents[0].true_score.is_some()
    }

    /// The id the document carried in its source file, if it was ingested.
    pub fn external_id(&self, id: DocId) -> Option<&ExternalId> {
        let i = *self.index.get(&id)?;
        self.external_ids.as_ref().map(|ids| &ids[i])
    }

    pub fn lookup_external(&self, ext: &ExternalId) -> Option<DocId> {
        let ids = self.external_ids.as_ref()?;
        ids.iter()
            .position(|e| e == ext)
            .map(|i| self.documents[i].id)
    }
}

/// A permutation of document ids, most relevant first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    pub order: Vec<DocId>,
}

impl Ranking {
    pub fn new(order: Vec<DocId>) -> Self {
        Ranking { order }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn best(&self) -> Option<DocId> {
        self.order.first().copied()
    }

    /// True when `order` contains exactly the ids in `input`, each once.
    pub fn is_permutation_of(&self, input: &[DocId]) -> bool {
        if self.order.len() != input.len() {
            return false;
        }
        let a: BTreeSet<_> = self.order.iter().collect();
        let b: BTreeSet<_> = input.iter().collect();
        a.len() == self.order.len() && a == b
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopKResult {
    /// Best first when `ordered`; ascending id otherwise.
    pub ids: Vec<DocId>,
    pub ordered: bool,
    /// The K that was requested.
    pub k: usize,
    /// Set when the requested K exceeded the corpus size and was clamped to N.
    pub clamped: bool,
}

impl TopKResult {
    pub fn ordered(ids: Vec<DocId>, k: usize, clamped: bool) -> Self {
        TopKResult {
            ids,
            ordered: true,
            k,
            clamped,
        }
    }

    pub fn unordered(mut ids: Vec<DocId>, k: usize, clamped: bool) -> Self {
        ids.sort_unstable();
        TopKResult {
            ids,
            ordered: false,
            k,
            clamped,
        }
    }

    pub fn id_set(&self) -> BTreeSet<DocId> {
        self.ids.iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Resolves a requested K against a corpus of size `n`: returns the effective K
/// and whether it was clamped.
pub(crate) fn clamp_k(k: usize, n: usize) -> Result<(usize, bool)> {
    if k == 0 {
        return Err(ListkError::invalid("K must be at least 1"));
    }
    Ok(if k > n { (n, true) } else { (k, false) })
}

/// Exact top-K by ground-truth score. Used as the reference every algorithm is
/// checked against.
pub fn brute_force_topk(corpus: &Corpus, k: usize, ordered: bool) -> Result<TopKResult> {
    let (k_eff, clamped) = clamp_k(k, corpus.len())?;
    let order = truth_order(&corpus.doc_refs())?;
    let ids = order[..k_eff].to_vec();
    Ok(if ordered {
        TopKResult::ordered(ids, k, clamped)
    } else {
        TopKResult::unordered(ids, k, clamped)
    })
}

/// Full ground-truth ranking of `docs`.
pub fn truth_order(docs: &[&Document]) -> Result<Vec<DocId>> {
    if let Some(d) = docs.iter().find(|d| d.true_score.is_none()) {
        return Err(ListkError::MissingScore(d.id));
    }
    let mut sorted = docs.to_vec();
    sorted.sort_by(|a, b| relevance_cmp(a, b).expect("scores checked above"));
    Ok(sorted.iter().map(|d| d.id).collect())
}
