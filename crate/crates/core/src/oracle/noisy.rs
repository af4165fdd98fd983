use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{BackendReply, RankBackend, RankRequest};
use crate::domain::{truth_order, Corpus, DocId};
use crate::error::{ListkError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyOracleParams {
    /// Weight of the true signal, in [0, 1]. 1 reproduces the perfect oracle.
    pub proxy_correlation: f64,
    pub seed: u64,
}

impl NoisyOracleParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.proxy_correlation) {
            return Err(ListkError::invalid(format!(
                "proxy correlation {} outside [0, 1]",
                self.proxy_correlation
            )));
        }
        Ok(())
    }
}

/// Per-document corrupted scores `rho * z + sqrt(1 - rho^2) * eps`.
///
/// `z` is the normal quantile of the document's ground-truth rank and `eps`
/// is standard normal noise drawn once per document, in corpus order, from
/// `seed`. The same scores serve as a simulated embedding proxy.
pub fn corrupted_scores(corpus: &Corpus, rho: f64, seed: u64) -> Result<HashMap<DocId, f64>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(ListkError::invalid(format!(
            "correlation {rho} outside [0, 1]"
        )));
    }
    let n = corpus.len();
    let order = truth_order(&corpus.doc_refs())?;
    let std_normal = Normal::standard();
    let z: HashMap<DocId, f64> = order
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let ascending_rank = (n - 1 - i) as f64;
            (
                id,
                std_normal.inverse_cdf((ascending_rank + 0.5) / n as f64),
            )
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_weight = (1.0 - rho * rho).max(0.0).sqrt();
    Ok(corpus
        .documents()
        .iter()
        .map(|d| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            (d.id, rho * z[&d.id] + noise_weight * eps)
        })
        .collect())
}

/// Ranks by scores corrupted with pre-drawn, per-document noise, so results
/// do not depend on call order or dispatch interleaving.
#[derive(Clone, Debug)]
pub struct NoisyBackend {
    scores: HashMap<DocId, f64>,
}

impl NoisyBackend {
    pub fn new(corpus: &Corpus, params: &NoisyOracleParams) -> Result<Self> {
        params.validate()?;
        Ok(NoisyBackend {
            scores: corrupted_scores(corpus, params.proxy_correlation, params.seed)?,
        })
    }
}

impl RankBackend for NoisyBackend {
    fn rank(&self, req: &RankRequest<'_>) -> Result<BackendReply> {
        let mut scored = Vec::with_capacity(req.docs.len());
        for d in req.docs {
            let s = *self
                .scores
                .get(&d.id)
                .ok_or(ListkError::MissingScore(d.id))?;
            scored.push((s, d.id));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(BackendReply::ok(
            scored.into_iter().map(|(_, id)| id).collect(),
        ))
    }

    fn name(&self) -> &'static str {
        "noisy"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Document, Query};
    use crate::oracle::{Oracle, PerfectBackend};
    use proptest::prelude::*;
    use std::sync::Arc;

    proptest! {
        #[test]
        fn rho_one_matches_perfect(scores in proptest::collection::vec(0u8..20, 2..30), seed in any::<u64>()) {
            // Small score range forces ties, which must break by id in both backends.
            let corpus = Corpus::from_scores(&scores.iter().map(|&s| s as f64).collect::<Vec<_>>()).unwrap();
            let noisy = NoisyBackend::new(&corpus, &NoisyOracleParams { proxy_correlation: 1.0, seed }).unwrap();
            let refs = corpus.doc_refs();
            let q = Query::default();
            for chunk in refs.chunks(7) {
                let req = RankRequest { query: &q, docs: chunk, pivot_order: None };
                prop_assert_eq!(noisy.rank(&req).unwrap().order, PerfectBackend.rank(&req).unwrap().order);
            }
        }
    }

    #[test]
    fn noise_is_consistent_across_calls_and_seeds() {
        let corpus = Corpus::from_scores(&(0..50).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        let p = NoisyOracleParams {
            proxy_correlation: 0.3,
            seed: 11,
        };
        let a = NoisyBackend::new(&corpus, &p).unwrap();
        let b = NoisyBackend::new(&corpus, &p).unwrap();
        assert_eq!(a.scores, b.scores);
        let o = Oracle::new(Arc::new(a), 50).unwrap();
        let r = o.rank(&Query::default(), &corpus.doc_refs()).unwrap();
        assert_ne!(r.order, truth_order(&corpus.doc_refs()).unwrap());
    }

    #[test]
    fn rejects_bad_correlation() {
        let corpus = Corpus::new(vec![Document::scored(0, 1.0)]).unwrap();
        assert!(NoisyBackend::new(
            &corpus,
            &NoisyOracleParams {
                proxy_correlation: 1.5,
                seed: 0
            }
        )
        .is_err());
    }
}
