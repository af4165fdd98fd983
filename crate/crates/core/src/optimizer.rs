//! Plan optimizer: pick filter usage, aggregator and parameters minimizing the
//! predicted number of oracle calls subject to a recall target.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::costmodel::{
    cost_lmpq_select, cost_lmpq_sort, cost_lt_filter, cost_lt_topk, optimal_pivot_select,
    optimal_pivot_sort, recall_deficit_lt_filter, recall_lt_filter, CostModelParams, RecallMode,
};
use crate::error::{ListkError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub recall_target: f64,
    /// Order the whole corpus. `k` is then taken to be `n`.
    #[serde(default)]
    pub full_sort: bool,
}

impl PlanRequest {
    pub fn new(n: usize, k: usize, l: usize, recall_target: f64) -> Self {
        PlanRequest {
            n,
            k,
            l,
            recall_target,
            full_sort: false,
        }
    }

    pub fn full_sort(n: usize, l: usize) -> Self {
        PlanRequest {
            n,
            k: n,
            l,
            recall_target: 1.0,
            full_sort: true,
        }
    }

    /// The K actually planned for.
    pub fn effective_k(&self) -> usize {
        if self.full_sort {
            self.n
        } else {
            self.k
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 2 {
            return Err(ListkError::invalid("list size L must be at least 2"));
        }
        if self.n == 0 {
            return Err(ListkError::EmptyCorpus);
        }
        if !self.full_sort && (self.k == 0 || self.k > self.n) {
            return Err(ListkError::invalid(format!(
                "need 1 <= K <= N, got K = {}, N = {}",
                self.k, self.n
            )));
        }
        if !(0.0..=1.0).contains(&self.recall_target) {
            return Err(ListkError::invalid(format!(
                "recall target must lie in [0, 1], got {}",
                self.recall_target
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[serde(rename = "lttopk")]
    LtTopK,
    /// Quickselect followed by quicksort of the selected set.
    Lmpq,
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregator::LtTopK => "lttopk",
            Aggregator::Lmpq => "lmpq",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    LtFilter,
    LtTopk,
    LmpqSelect,
    LmpqSort,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::LtFilter => "lt_filter",
            Stage::LtTopk => "lt_topk",
            Stage::LmpqSelect => "lmpq_select",
            Stage::LmpqSort => "lmpq_sort",
        }
    }
}

/// The optimizer's decision variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub use_filter: bool,
    /// Survivors per filter bin; `None` without a filter.
    pub survivors: Option<usize>,
    pub agg: Aggregator,
    pub p_select: usize,
    pub p_sort: usize,
}

impl PlanConfig {
    /// Checks the integer constraints `1 <= S, P_select, P_sort < L`.
    pub fn validate(&self, l: usize) -> Result<()> {
        let in_range = |v: usize| (1..l).contains(&v);
        if !in_range(self.p_select) || !in_range(self.p_sort) {
            return Err(ListkError::invalid(format!(
                "pivot counts must lie in [1, {l}), got P_select = {}, P_sort = {}",
                self.p_select, self.p_sort
            )));
        }
        match (self.use_filter, self.survivors) {
            (true, Some(s)) if in_range(s) => Ok(()),
            (true, _) => Err(ListkError::invalid(format!(
                "a filtered plan needs survivors S in [1, {l})"
            ))),
            (false, _) => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageCost {
    pub stage: Stage,
    pub calls: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub total: f64,
    pub breakdown: Vec<StageCost>,
    pub n_filtered: usize,
    pub predicted_recall: f64,
}

/// Documents left after the optional filter.
pub fn n_filtered(n: usize, l: usize, s: usize, use_filter: bool) -> usize {
    if use_filter {
        s * n.div_ceil(l)
    } else {
        n
    }
}

/// Predicted calls of a plan, stage by stage.
pub fn cost_total(
    req: &PlanRequest,
    cfg: &PlanConfig,
    params: &CostModelParams,
    mode: RecallMode,
) -> Result<CostEstimate> {
    req.validate()?;
    cfg.validate(req.l)?;
    let (n, l) = (req.n, req.l);
    let k = req.effective_k();
    let mut breakdown = Vec::new();

    if req.full_sort {
        if cfg.use_filter {
            return Err(ListkError::invalid("full sort plans never filter"));
        }
        let (stage, calls) = match cfg.agg {
            Aggregator::LtTopK => (Stage::LtTopk, cost_lt_topk(n, n, l)?),
            Aggregator::Lmpq => (Stage::LmpqSort, cost_lmpq_sort(n, l, cfg.p_sort, params)?),
        };
        breakdown.push(StageCost { stage, calls });
        return Ok(CostEstimate {
            total: calls,
            breakdown,
            n_filtered: n,
            predicted_recall: 1.0,
        });
    }

    let s = cfg.survivors.unwrap_or(0);
    let nf = n_filtered(n, l, s, cfg.use_filter);
    if nf < k {
        return Err(ListkError::invalid(format!(
            "filter keeps {nf} documents, fewer than K = {k}"
        )));
    }
    let mut predicted_recall = 1.0;
    if cfg.use_filter {
        breakdown.push(StageCost {
            stage: Stage::LtFilter,
            calls: cost_lt_filter(n, l)? as f64,
        });
        predicted_recall = recall_lt_filter(n, k, l, s, mode)?;
    }
    match cfg.agg {
        Aggregator::LtTopK => breakdown.push(StageCost {
            stage: Stage::LtTopk,
            calls: cost_lt_topk(nf, k, l)?,
        }),
        Aggregator::Lmpq => {
            breakdown.push(StageCost {
                stage: Stage::LmpqSelect,
                calls: cost_lmpq_select(nf, k, l, cfg.p_select, params)?,
            });
            breakdown.push(StageCost {
                stage: Stage::LmpqSort,
                calls: cost_lmpq_sort(k, l, cfg.p_sort, params)?,
            });
        }
    }
    Ok(CostEstimate {
        total: breakdown.iter().map(|s| s.calls).sum(),
        breakdown,
        n_filtered: nf,
        predicted_recall,
    })
}

/// Whether survivors `s` meet the target. Compared through the recall deficit
/// so that a target of exactly 1 is only met by a model recall of exactly 1.
fn survivors_meet(
    n: usize,
    k: usize,
    l: usize,
    s: usize,
    target: f64,
    mode: RecallMode,
) -> Result<bool> {
    Ok(recall_deficit_lt_filter(n, k, l, s, mode)? <= 1.0 - target)
}

/// Smallest `S` in `[1, L)` whose predicted recall meets the target, by
/// binary search over the monotone recall curve.
pub fn min_survivors(
    n: usize,
    k: usize,
    l: usize,
    target: f64,
    mode: RecallMode,
) -> Result<Option<usize>> {
    if l < 2 {
        return Err(ListkError::invalid("list size L must be at least 2"));
    }
    let meets = |s: usize| survivors_meet(n, k, l, s, target, mode);
    if !meets(l - 1)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (1, l - 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if meets(mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(Some(lo))
}

/// Linear-scan counterpart of [`min_survivors`].
pub fn min_survivors_scan(
    n: usize,
    k: usize,
    l: usize,
    target: f64,
    mode: RecallMode,
) -> Result<Option<usize>> {
    for s in 1..l {
        if survivors_meet(n, k, l, s, target, mode)? {
            return Ok(Some(s));
        }
    }
    Ok(None)
}

/// Every feasible plan, in a fixed order: unfiltered before filtered, LTTopK
/// before LMPQ.
pub fn enumerate_plans(
    req: &PlanRequest,
    params: &CostModelParams,
    mode: RecallMode,
) -> Result<Vec<(PlanConfig, CostEstimate)>> {
    req.validate()?;
    let (n, l) = (req.n, req.l);
    let k = req.effective_k();
    let p_sort = optimal_pivot_sort(l)?;

    let mut filters = vec![None];
    if !req.full_sort {
        if let Some(s) = min_survivors(n, k, l, req.recall_target, mode)? {
            if n_filtered(n, l, s, true) >= k {
                filters.push(Some(s));
            }
        }
    }

    let mut plans = Vec::new();
    for survivors in filters {
        let nf = n_filtered(n, l, survivors.unwrap_or(0), survivors.is_some());
        let p_select = optimal_pivot_select(l, (k as f64 / nf as f64).min(1.0))?;
        for agg in [Aggregator::LtTopK, Aggregator::Lmpq] {
            let cfg = PlanConfig {
                use_filter: survivors.is_some(),
                survivors,
                agg,
                p_select,
                p_sort,
            };
            let est = cost_total(req, &cfg, params, mode)?;
            plans.push((cfg, est));
        }
    }
    Ok(plans)
}

/// The cheapest enumerated plan; the first one wins ties.
pub fn optimize_plan(
    req: &PlanRequest,
    params: &CostModelParams,
    mode: RecallMode,
) -> Result<(PlanConfig, CostEstimate)> {
    let plans = enumerate_plans(req, params, mode)?;
    let mut best: Option<(PlanConfig, CostEstimate)> = None;
    for (cfg, est) in plans {
        if best.as_ref().is_none_or(|(_, b)| est.total < b.total) {
            best = Some((cfg, est));
        }
    }
    best.ok_or_else(|| ListkError::invalid("no feasible plan"))
}

/// Everything a consumer needs to reproduce a planning decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub request: PlanRequest,
    pub params: CostModelParams,
    pub recall_mode: RecallMode,
    pub config: PlanConfig,
    pub estimate: CostEstimate,
    pub alternatives: Vec<(PlanConfig, CostEstimate)>,
}

impl PlanReport {
    pub fn build(req: &PlanRequest, params: &CostModelParams, mode: RecallMode) -> Result<Self> {
        let (config, estimate) = optimize_plan(req, params, mode)?;
        Ok(PlanReport {
            request: *req,
            params: *params,
            recall_mode: mode,
            config,
            estimate,
            alternatives: enumerate_plans(req, params, mode)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const PARAMS: CostModelParams = CostModelParams {
        beta_sort: 0.1,
        c_select: 0.0,
    };

    #[test]
    fn filtered_sizes() {
        assert_eq!(n_filtered(5183, 20, 1, true), 260);
        assert_eq!(n_filtered(5183, 20, 1, false), 5183);
        assert_eq!(n_filtered(100, 20, 19, true), 95);
        assert_eq!(n_filtered(30, 20, 19, true), 38);
    }

    #[test]
    fn tournament_plan_cost() {
        let req = PlanRequest::new(5183, 10, 20, 0.9);
        let cfg = PlanConfig {
            use_filter: false,
            survivors: None,
            agg: Aggregator::LtTopK,
            p_select: 4,
            p_sort: 6,
        };
        let est = cost_total(&req, &cfg, &PARAMS, RecallMode::ExpectedMin).unwrap();
        assert_eq!(est.breakdown.len(), 1);
        assert_relative_eq!(est.total, cost_lt_topk(5183, 10, 20).unwrap());
        assert_eq!(est.predicted_recall, 1.0);
    }

    #[test]
    fn filtered_lmpq_plan_composes_stages() {
        let req = PlanRequest::new(5183, 10, 20, 0.0);
        let cfg = PlanConfig {
            use_filter: true,
            survivors: Some(1),
            agg: Aggregator::Lmpq,
            p_select: 4,
            p_sort: 6,
        };
        let est = cost_total(&req, &cfg, &PARAMS, RecallMode::ExpectedMin).unwrap();
        let stages: Vec<Stage> = est.breakdown.iter().map(|s| s.stage).collect();
        assert_eq!(
            stages,
            vec![Stage::LtFilter, Stage::LmpqSelect, Stage::LmpqSort]
        );
        assert_eq!(est.breakdown[0].calls, 260.0);
        assert_relative_eq!(
            est.breakdown[1].calls,
            cost_lmpq_select(260, 10, 20, 4, &PARAMS).unwrap()
        );
        assert_relative_eq!(
            est.breakdown[2].calls,
            cost_lmpq_sort(10, 20, 6, &PARAMS).unwrap()
        );
        assert_relative_eq!(
            est.total,
            est.breakdown.iter().map(|s| s.calls).sum::<f64>()
        );
    }

    #[test]
    fn full_sort_has_one_stage() {
        let req = PlanRequest::full_sort(1000, 20);
        let plans = enumerate_plans(&req, &PARAMS, RecallMode::ExpectedMin).unwrap();
        assert_eq!(plans.len(), 2);
        for (cfg, est) in &plans {
            assert!(!cfg.use_filter);
            assert_eq!(est.breakdown.len(), 1);
        }
        assert_eq!(plans[1].1.breakdown[0].stage, Stage::LmpqSort);
    }

    #[test]
    fn survivors_search_agrees_with_scan() {
        for mode in [RecallMode::Paper, RecallMode::ExpectedMin] {
            for (n, k) in [(5183, 10), (5183, 50), (1000, 1), (200, 100), (40, 3)] {
                for t in 0..=20 {
                    let target = t as f64 / 20.0;
                    assert_eq!(
                        min_survivors(n, k, 20, target, mode).unwrap(),
                        min_survivors_scan(n, k, 20, target, mode).unwrap(),
                        "{mode:?} n={n} k={k} target={target}"
                    );
                }
            }
        }
        assert_eq!(
            min_survivors(5183, 10, 20, 0.0, RecallMode::ExpectedMin).unwrap(),
            Some(1)
        );
        assert_eq!(
            min_survivors(5183, 10, 20, 1.0, RecallMode::ExpectedMin).unwrap(),
            None
        );
    }

    #[test]
    fn perfect_recall_target_disables_filter() {
        let req = PlanRequest::new(5183, 10, 20, 1.0);
        for (cfg, _) in enumerate_plans(&req, &PARAMS, RecallMode::ExpectedMin).unwrap() {
            assert!(!cfg.use_filter);
        }
        // The clamped printed formula reports recall 1 at this light load, so
        // that mode still admits a filter.
        assert_eq!(
            min_survivors(5183, 10, 20, 1.0, RecallMode::Paper).unwrap(),
            Some(1)
        );
    }

    #[test]
    fn chosen_plan_is_cheapest() {
        for (n, k, r) in [
            (5183, 10, 0.9),
            (5183, 10, 0.5),
            (100, 50, 0.8),
            (20, 3, 0.0),
        ] {
            let req = PlanRequest::new(n, k, 20, r);
            let (cfg, est) = optimize_plan(&req, &PARAMS, RecallMode::ExpectedMin).unwrap();
            for (_, alt) in enumerate_plans(&req, &PARAMS, RecallMode::ExpectedMin).unwrap() {
                assert!(est.total <= alt.total);
            }
            if cfg.use_filter {
                assert!(est.predicted_recall >= r);
            }
        }
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(PlanRequest::new(10, 11, 20, 0.5).validate().is_err());
        assert!(PlanRequest::new(10, 5, 20, 1.5).validate().is_err());
        assert!(PlanRequest::new(10, 0, 20, 0.5).validate().is_err());
    }

    #[test]
    fn report_serializes() {
        let req = PlanRequest::new(5183, 10, 20, 0.9);
        let report = PlanReport::build(&req, &PARAMS, RecallMode::ExpectedMin).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: PlanReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        assert!(json.contains("\"use_filter\""));
    }
}
