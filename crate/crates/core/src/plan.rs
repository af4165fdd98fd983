//! Executes a [`PlanConfig`] against a corpus and reports per-stage calls.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    lmpq_select_docs, lmpq_sort_docs, lt_filter, lt_topk, top_few_refine, FilterConfig,
    PivotConfig, PivotStrategy, ProxyScores,
};
use crate::domain::{clamp_k, Document, Query, TopKResult};
use crate::error::Result;
use crate::optimizer::{Aggregator, PlanConfig, Stage};
use crate::oracle::Oracle;

/// Execution knobs outside the optimizer's decision variables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecOptions {
    /// Physical pivots per call; `None` uses `P' = P`.
    pub physical_pivots: Option<usize>,
    pub early_stopping: bool,
    pub pivot_strategy: PivotStrategy,
    pub filter_rounds: usize,
    /// Pairwise re-sort of this many leading results; 0 or 1 disables it.
    pub refine_top: usize,
    /// Sort the whole input instead of selecting K.
    pub full_sort: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            physical_pivots: None,
            early_stopping: false,
            pivot_strategy: PivotStrategy::Random,
            filter_rounds: 1,
            refine_top: 0,
            full_sort: false,
        }
    }
}

impl ExecOptions {
    fn pivots(&self, p: usize) -> PivotConfig {
        PivotConfig::new(p)
            .with_physical(self.physical_pivots.map_or(p, |pp| pp.min(p)))
            .with_early_stopping(self.early_stopping)
            .with_strategy(self.pivot_strategy)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanOutcome<'a> {
    pub result: TopKResult,
    /// Best first.
    pub documents: Vec<&'a Document>,
    /// Oracle calls per executed stage, keyed by stage name.
    pub stage_costs: BTreeMap<String, u64>,
}

/// Runs the plan and returns an ordered top-K.
#[allow(clippy::too_many_arguments)]
pub fn execute_plan<'a, R: Rng + ?Sized>(
    docs: &[&'a Document],
    query: &Query,
    k: usize,
    cfg: &PlanConfig,
    opts: &ExecOptions,
    oracle: &Oracle,
    proxy: Option<&ProxyScores>,
    rng: &mut R,
) -> Result<PlanOutcome<'a>> {
    let k = if opts.full_sort { docs.len() } else { k };
    let (_, clamped) = clamp_k(k, docs.len())?;
    cfg.validate(oracle.list_size())?;
    let mut stage_costs = BTreeMap::new();
    let mut mark = oracle.calls();
    let mut record = |name: &str, oracle: &Oracle| {
        let now = oracle.calls();
        stage_costs.insert(name.to_string(), now - mark);
        mark = now;
    };

    let mut input = docs.to_vec();
    if cfg.use_filter && !opts.full_sort {
        let s = cfg.survivors.expect("validated");
        let fc = FilterConfig {
            survivors: s,
            rounds: opts.filter_rounds.max(1),
        };
        input = lt_filter(&input, query, &fc, oracle, rng)?;
        record(Stage::LtFilter.name(), oracle);
    }
    let k_stage = k.min(input.len());

    let mut ranked: Vec<&'a Document> = match cfg.agg {
        Aggregator::LtTopK => {
            let r = lt_topk(&input, query, k_stage, oracle, rng)?;
            record(Stage::LtTopk.name(), oracle);
            let by_id: std::collections::HashMap<_, _> = input.iter().map(|d| (d.id, *d)).collect();
            r.ids.iter().map(|id| by_id[id]).collect()
        }
        Aggregator::Lmpq => {
            let chosen = if opts.full_sort {
                input
            } else {
                let c = lmpq_select_docs(
                    &input,
                    query,
                    k_stage,
                    &opts.pivots(cfg.p_select),
                    oracle,
                    proxy,
                    rng,
                )?;
                record(Stage::LmpqSelect.name(), oracle);
                c
            };
            let sorted =
                lmpq_sort_docs(&chosen, query, &opts.pivots(cfg.p_sort), oracle, proxy, rng)?;
            record(Stage::LmpqSort.name(), oracle);
            sorted
        }
    };

    if opts.refine_top > 1 {
        let few = opts.refine_top.min(ranked.len());
        ranked = top_few_refine(&ranked, query, oracle, few)?;
        record("refine", oracle);
    }

    let ids = ranked.iter().map(|d| d.id).collect();
    Ok(PlanOutcome {
        result: TopKResult::ordered(ids, k, clamped || k_stage < k),
        documents: ranked,
        stage_costs,
    })
}
