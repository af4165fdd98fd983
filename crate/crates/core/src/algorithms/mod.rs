//! The listwise rank-aggregation operators.
//!
//! All operators take their candidates as `&[&Document]`, learn about
//! relevance only through an [`Oracle`](crate::oracle::Oracle), and draw all
//! randomness (bin shuffles, pivot samples) from one caller-supplied generator
//! in a fixed order, so a seeded run is replayable whatever the dispatch width.

mod buckets;
mod filter;
mod pairwise;
mod pivots;
mod quickselect;
mod quicksort;
mod tournament;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::domain::{DocId, Document};
use crate::error::{ListkError, Result};

pub use buckets::{bucket_sort_round, Buckets};
pub use filter::lt_filter;
pub use pairwise::{pairwise_baseline, top_few_refine};
pub use pivots::select_pivots;
pub use quickselect::{lmpq_select, lmpq_select_docs};
pub use quicksort::{lmpq_sort, lmpq_sort_docs};
pub use tournament::{
    lt_topk, lt_topk_traced, ComparisonGraph, EdgeRecording, TournamentRecord, TournamentTrace,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PivotStrategy {
    #[default]
    Random,
    /// Choose pivots by a cheap proxy ranking such as embedding similarity.
    Proxy,
}

/// Pivot parameters for multi-pivot quickselect and quicksort.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PivotConfig {
    /// Logical pivot count P.
    pub pivots: usize,
    /// Physical pivot count P': pivots embedded in each bucketing call.
    pub physical_pivots: usize,
    pub early_stopping: bool,
    pub strategy: PivotStrategy,
}

impl PivotConfig {
    /// `P' = P`, random pivots, no early stopping.
    pub fn new(pivots: usize) -> Self {
        PivotConfig {
            pivots,
            physical_pivots: pivots,
            early_stopping: false,
            strategy: PivotStrategy::Random,
        }
    }

    pub fn with_physical(mut self, physical: usize) -> Self {
        self.physical_pivots = physical;
        self
    }

    pub fn with_early_stopping(mut self, on: bool) -> Self {
        self.early_stopping = on;
        self
    }

    pub fn with_strategy(mut self, strategy: PivotStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    /// Checks `1 <= P' <= P < L`.
    pub fn validate(&self, list_size: usize) -> Result<()> {
        let (p, pp) = (self.pivots, self.physical_pivots);
        if pp < 1 || pp > p || p >= list_size {
            return Err(ListkError::invalid(format!(
                "pivot counts must satisfy 1 <= P' <= P < L (P' = {pp}, P = {p}, L = {list_size})"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Survivors kept from each bin.
    pub survivors: usize,
    pub rounds: usize,
}

impl FilterConfig {
    pub fn new(survivors: usize) -> Self {
        FilterConfig {
            survivors,
            rounds: 1,
        }
    }

    /// `S >= L` is accepted and degenerates to no pruning.
    pub fn validate(&self) -> Result<()> {
        if self.survivors < 1 || self.rounds < 1 {
            return Err(ListkError::invalid(
                "filter needs at least one survivor per bin and one round",
            ));
        }
        Ok(())
    }
}

/// Proxy relevance per document, higher is more relevant.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProxyScores(pub HashMap<DocId, f64>);

impl ProxyScores {
    pub fn get(&self, id: DocId) -> Option<f64> {
        self.0.get(&id).copied()
    }

    /// Indices of `docs` ordered by descending proxy score, ties by id.
    pub(crate) fn rank_indices(&self, docs: &[&Document]) -> Result<Vec<usize>> {
        let mut keyed = Vec::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            let s = self.get(d.id).ok_or_else(|| {
                ListkError::invalid(format!("no proxy score for document {}", d.id))
            })?;
            keyed.push((s, d.id, i));
        }
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(keyed.into_iter().map(|(_, _, i)| i).collect())
    }
}

/// Looks up the documents of a ranking returned for `docs`.
pub(crate) fn docs_in_order<'a>(order: &[DocId], docs: &[&'a Document]) -> Vec<&'a Document> {
    order
        .iter()
        .map(|id| {
            *docs
                .iter()
                .find(|d| d.id == *id)
                .expect("oracle output is a permutation of its input")
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::domain::{Corpus, Document, Query};

    /// The six-document toy instance: id i has score i, in input order 2,6,4,5,1,3.
    pub fn toy() -> Corpus {
        Corpus::new(
            [2u32, 6, 4, 5, 1, 3]
                .iter()
                .map(|&i| Document::scored(i, i as f64))
                .collect(),
        )
        .unwrap()
    }

    pub fn query() -> Query {
        Query::new("q", "most relevant")
    }
}
