//! Monte Carlo harness: runs the operators on random permutations under the
//! perfect oracle, checks every answer against brute force and summarizes the
//! call counts next to the cost models.

use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    lmpq_select, lmpq_sort, lt_filter, lt_topk, pairwise_baseline, FilterConfig, PivotConfig,
};
use crate::costmodel::{
    cost_lmpq_select, cost_lmpq_sort, cost_lt_filter, cost_lt_topk, expected_containing_bucket,
    recall_lt_filter, CostModelParams, RecallMode,
};
use crate::domain::{
    brute_force_topk, metrics::recall_at_k, truth_order, Corpus, Query, TopKResult,
};
use crate::error::{ListkError, Result};
use crate::oracle::Oracle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimAlgorithm {
    LmpqSelect,
    LmpqSort,
    #[serde(rename = "lt_topk")]
    LtTopK,
    LtFilter,
    Pairwise,
}

impl SimAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            SimAlgorithm::LmpqSelect => "lmpq_select",
            SimAlgorithm::LmpqSort => "lmpq_sort",
            SimAlgorithm::LtTopK => "lt_topk",
            SimAlgorithm::LtFilter => "lt_filter",
            SimAlgorithm::Pairwise => "pairwise",
        }
    }

    fn uses_pivots(self) -> bool {
        matches!(self, SimAlgorithm::LmpqSelect | SimAlgorithm::LmpqSort)
    }
}

/// K as a count or as a fraction of N.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KSpec {
    Count(usize),
    Psi(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub algorithm: SimAlgorithm,
    pub n: usize,
    pub k: KSpec,
    pub l: usize,
    /// Logical pivot counts to sweep (pivot algorithms only).
    #[serde(default)]
    pub pivots: Vec<usize>,
    /// Physical pivots per call; `None` means `P' = P`.
    #[serde(default)]
    pub physical_pivots: Option<usize>,
    #[serde(default)]
    pub early_stopping: bool,
    /// Survivor counts to sweep (filter only).
    #[serde(default)]
    pub survivors: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads for trials. Results do not depend on it, so it is
    /// left out of serialized output.
    #[serde(default = "one", skip_serializing)]
    pub parallelism: usize,
}

fn one() -> usize {
    1
}

impl SimSpec {
    pub fn new(algorithm: SimAlgorithm, n: usize, k: KSpec, l: usize) -> Self {
        SimSpec {
            algorithm,
            n,
            k,
            l,
            pivots: Vec::new(),
            physical_pivots: None,
            early_stopping: false,
            survivors: Vec::new(),
            trials: 100,
            seed: 0,
            parallelism: 1,
        }
    }

    /// K as a count: `max(1, round(psi * N))` for fractional specs, or N for
    /// sorting.
    pub fn resolved_k(&self) -> usize {
        if self.algorithm == SimAlgorithm::LmpqSort {
            return self.n;
        }
        match self.k {
            KSpec::Count(k) => k,
            KSpec::Psi(psi) => ((psi * self.n as f64).round() as usize).clamp(1, self.n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(ListkError::invalid("trials must be at least 1"));
        }
        if self.n == 0 {
            return Err(ListkError::EmptyCorpus);
        }
        if self.l < 2 {
            return Err(ListkError::invalid("list size L must be at least 2"));
        }
        match self.k {
            KSpec::Count(k) if k == 0 || k > self.n => {
                if self.algorithm != SimAlgorithm::LmpqSort {
                    return Err(ListkError::invalid(format!(
                        "need 1 <= K <= N, got K = {k}"
                    )));
                }
            }
            KSpec::Psi(psi) if !(psi > 0.0 && psi <= 1.0) => {
                return Err(ListkError::invalid(format!(
                    "psi must lie in (0, 1], got {psi}"
                )));
            }
            _ => {}
        }
        if self.algorithm.uses_pivots() {
            if self.pivots.is_empty() {
                return Err(ListkError::invalid("pivot algorithms need at least one P"));
            }
            for &p in &self.pivots {
                self.pivot_config(p).validate(self.l)?;
            }
        }
        if self.algorithm == SimAlgorithm::LtFilter {
            if self.survivors.is_empty() {
                return Err(ListkError::invalid("the filter needs at least one S"));
            }
            if self.survivors.contains(&0) {
                return Err(ListkError::invalid("survivor count S must be at least 1"));
            }
        }
        Ok(())
    }

    fn pivot_config(&self, p: usize) -> PivotConfig {
        PivotConfig::new(p)
            .with_physical(self.physical_pivots.unwrap_or(p).min(p))
            .with_early_stopping(self.early_stopping)
    }

    /// One entry per swept configuration: `(P, S)`.
    fn configs(&self) -> Vec<(Option<usize>, Option<usize>)> {
        match self.algorithm {
            SimAlgorithm::LmpqSelect | SimAlgorithm::LmpqSort => {
                self.pivots.iter().map(|&p| (Some(p), None)).collect()
            }
            SimAlgorithm::LtFilter => self.survivors.iter().map(|&s| (None, Some(s))).collect(),
            SimAlgorithm::LtTopK | SimAlgorithm::Pairwise => vec![(None, None)],
        }
    }
}

/// Per-trial seed: trials are independent yet replayable in any order.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    master ^ trial as u64
}

/// Summary statistics of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (sorted.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        };
        Summary {
            mean,
            std: var.sqrt(),
            stderr: var.sqrt() / n.sqrt(),
            min: sorted[0],
            q25: q(0.25),
            median: q(0.5),
            q75: q(0.75),
            max: sorted[sorted.len() - 1],
        }
    }
}

/// One swept configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub algorithm: SimAlgorithm,
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub p: Option<usize>,
    pub p_physical: Option<usize>,
    pub s: Option<usize>,
    pub trials: usize,
    pub calls: Summary,
    pub model_calls: Option<f64>,
    pub recall: Option<Summary>,
    pub model_recall_paper: Option<f64>,
    pub model_recall_expected_min: Option<f64>,
    /// Raw per-trial call counts, in trial order.
    #[serde(skip)]
    pub per_trial_calls: Vec<u64>,
    #[serde(skip)]
    pub per_trial_recall: Vec<f64>,
}

impl SimRow {
    pub fn rel_err(&self) -> Option<f64> {
        self.model_calls.map(|m| (self.calls.mean - m) / m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub spec: SimSpec,
    pub params: CostModelParams,
    pub rows: Vec<SimRow>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    algorithm: &'a str,
    n: usize,
    k: usize,
    l: usize,
    p: Option<usize>,
    p_physical: Option<usize>,
    s: Option<usize>,
    trials: usize,
    mean_calls: f64,
    std_calls: f64,
    stderr_calls: f64,
    min_calls: f64,
    median_calls: f64,
    max_calls: f64,
    model_calls: Option<f64>,
    rel_err: Option<f64>,
    recall_mean: Option<f64>,
    recall_std: Option<f64>,
    model_recall_paper: Option<f64>,
    model_recall_expected_min: Option<f64>,
}

impl SimulationResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(CsvRow {
                algorithm: r.algorithm.name(),
                n: r.n,
                k: r.k,
                l: r.l,
                p: r.p,
                p_physical: r.p_physical,
                s: r.s,
                trials: r.trials,
                mean_calls: r.calls.mean,
                std_calls: r.calls.std,
                stderr_calls: r.calls.stderr,
                min_calls: r.calls.min,
                median_calls: r.calls.median,
                max_calls: r.calls.max,
                model_calls: r.model_calls,
                rel_err: r.rel_err(),
                recall_mean: r.recall.map(|s| s.mean),
                recall_std: r.recall.map(|s| s.std),
                model_recall_paper: r.model_recall_paper,
                model_recall_expected_min: r.model_recall_expected_min,
            })
            .map_err(|e| ListkError::Config(format!("csv: {e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn row_for_pivots(&self, p: usize) -> Option<&SimRow> {
        self.rows.iter().find(|r| r.p == Some(p))
    }

    /// Pivot count with the lowest mean calls.
    pub fn argmin_pivots(&self) -> Option<usize> {
        self.rows
            .iter()
            .filter(|r| r.p.is_some())
            .min_by(|a, b| a.calls.mean.total_cmp(&b.calls.mean))
            .and_then(|r| r.p)
    }
}

struct TrialOutcome {
    calls: u64,
    recall: Option<f64>,
}

fn exactness(what: &str, got: &TopKResult, want: &TopKResult, seed: u64) -> Result<()> {
    if got != want {
        return Err(ListkError::ExactnessViolation(format!(
            "{what} differs from brute force (trial seed {seed}): got {:?}, want {:?}",
            got.ids, want.ids
        )));
    }
    Ok(())
}

fn run_trial(
    spec: &SimSpec,
    k: usize,
    p: Option<usize>,
    s: Option<usize>,
    trial: usize,
) -> Result<TrialOutcome> {
    let seed = trial_seed(spec.seed, trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus = Corpus::random_permutation(spec.n, &mut rng)?;
    let docs = corpus.doc_refs();
    let query = Query::new("sim", "higher score is more relevant");
    let oracle = Oracle::perfect(spec.l)?;
    let mut recall = None;
    match spec.algorithm {
        SimAlgorithm::LmpqSelect => {
            let cfg = spec.pivot_config(p.expect("pivot sweep"));
            let r = lmpq_select(&docs, &query, k, &cfg, &oracle, None, &mut rng)?;
            exactness(
                "lmpq_select",
                &r,
                &brute_force_topk(&corpus, k, false)?,
                seed,
            )?;
        }
        SimAlgorithm::LmpqSort => {
            let cfg = spec.pivot_config(p.expect("pivot sweep"));
            let r = lmpq_sort(&docs, &query, &cfg, &oracle, None, &mut rng)?;
            if r.order != truth_order(&docs)? {
                return Err(ListkError::ExactnessViolation(format!(
                    "lmpq_sort output is not the true order (trial seed {seed})"
                )));
            }
        }
        SimAlgorithm::LtTopK => {
            let r = lt_topk(&docs, &query, k, &oracle, &mut rng)?;
            exactness("lt_topk", &r, &brute_force_topk(&corpus, k, true)?, seed)?;
        }
        SimAlgorithm::Pairwise => {
            let r = pairwise_baseline(&docs, &query, k, &oracle, &mut rng)?;
            exactness("pairwise", &r, &brute_force_topk(&corpus, k, true)?, seed)?;
        }
        SimAlgorithm::LtFilter => {
            let cfg = FilterConfig::new(s.expect("survivor sweep"));
            let kept = lt_filter(&docs, &query, &cfg, &oracle, &mut rng)?;
            let kept =
                TopKResult::unordered(kept.iter().map(|d| d.id).collect(), kept.len(), false);
            recall = Some(recall_at_k(&kept, &brute_force_topk(&corpus, k, false)?)?);
        }
    }
    Ok(TrialOutcome {
        calls: oracle.calls(),
        recall,
    })
}

fn model_calls(
    spec: &SimSpec,
    k: usize,
    p: Option<usize>,
    params: &CostModelParams,
) -> Result<Option<f64>> {
    Ok(match spec.algorithm {
        SimAlgorithm::LmpqSelect => {
            Some(cost_lmpq_select(spec.n, k, spec.l, p.unwrap_or(1), params)?)
        }
        SimAlgorithm::LmpqSort => Some(cost_lmpq_sort(spec.n, spec.l, p.unwrap_or(1), params)?),
        SimAlgorithm::LtTopK => Some(cost_lt_topk(spec.n, k, spec.l)?),
        SimAlgorithm::LtFilter => Some(cost_lt_filter(spec.n, spec.l)? as f64),
        SimAlgorithm::Pairwise => None,
    })
}

fn map_trials<T: Send>(
    width: usize,
    trials: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    if width <= 1 {
        return (0..trials).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(width)
        .build()
        .map_err(|e| ListkError::invalid(format!("thread pool: {e}")))?;
    pool.install(|| (0..trials).into_par_iter().map(f).collect())
}

/// Runs every configuration of `spec` and overlays the default cost models.
pub fn run_simulation(spec: &SimSpec) -> Result<SimulationResult> {
    run_simulation_with(spec, &CostModelParams::default())
}

pub fn run_simulation_with(spec: &SimSpec, params: &CostModelParams) -> Result<SimulationResult> {
    spec.validate()?;
    let k = spec.resolved_k();
    let mut rows = Vec::new();
    for (p, s) in spec.configs() {
        let outcomes = map_trials(spec.parallelism, spec.trials, |t| {
            run_trial(spec, k, p, s, t)
        })?;
        let per_trial_calls: Vec<u64> = outcomes.iter().map(|o| o.calls).collect();
        let calls: Vec<f64> = per_trial_calls.iter().map(|&c| c as f64).collect();
        let per_trial_recall: Vec<f64> = outcomes.iter().filter_map(|o| o.recall).collect();
        let (model_recall_paper, model_recall_expected_min) = match s {
            Some(s) => (
                Some(recall_lt_filter(spec.n, k, spec.l, s, RecallMode::Paper)?),
                Some(recall_lt_filter(
                    spec.n,
                    k,
                    spec.l,
                    s,
                    RecallMode::ExpectedMin,
                )?),
            ),
            None => (None, None),
        };
        rows.push(SimRow {
            algorithm: spec.algorithm,
            n: spec.n,
            k,
            l: spec.l,
            p,
            p_physical: p.map(|p| spec.pivot_config(p).physical_pivots),
            s,
            trials: spec.trials,
            calls: Summary::of(&calls),
            model_calls: model_calls(spec, k, p, params)?,
            recall: (!per_trial_recall.is_empty()).then(|| Summary::of(&per_trial_recall)),
            model_recall_paper,
            model_recall_expected_min,
            per_trial_calls,
            per_trial_recall,
        });
    }
    Ok(SimulationResult {
        spec: spec.clone(),
        params: *params,
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: usize,
    pub empirical_mean: f64,
    pub stderr: f64,
    pub model: f64,
    pub rel_err: f64,
}

/// Simulates a pivot sweep and joins it with the model under `params`.
pub fn sweep_and_compare(spec: &SimSpec, params: &CostModelParams) -> Result<Vec<SweepRow>> {
    if !spec.algorithm.uses_pivots() {
        return Err(ListkError::invalid("sweeps compare pivot algorithms only"));
    }
    let result = run_simulation_with(spec, params)?;
    Ok(result
        .rows
        .iter()
        .map(|r| {
            let model = r.model_calls.expect("pivot algorithms have a model");
            SweepRow {
                p: r.p.expect("pivot sweep"),
                empirical_mean: r.calls.mean,
                stderr: r.calls.stderr,
                model,
                rel_err: (r.calls.mean - model) / model,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketCheck {
    pub empirical_mean: f64,
    pub stderr: f64,
    pub model: f64,
    pub z: f64,
}

/// Size of the bucket holding the element at quantile `psi` after one round
/// of `P` uniformly drawn pivots, against the closed form.
pub fn validate_bucket_expectation(
    n: usize,
    psi: f64,
    p: usize,
    trials: usize,
    seed: u64,
) -> Result<BucketCheck> {
    if trials < 100 {
        return Err(ListkError::invalid(
            "bucket validation needs at least 100 trials",
        ));
    }
    if p == 0 || p >= n {
        return Err(ListkError::invalid(format!("need 1 <= P < N, got P = {p}")));
    }
    let model = expected_containing_bucket(n as f64, psi, p)?;
    let target = ((psi * n as f64) as usize).min(n - 1);
    let sizes: Vec<f64> = (0..trials)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, t));
            let pivots = sample(&mut rng, n, p).into_vec();
            if pivots.contains(&target) {
                return 0.0;
            }
            let below = pivots
                .iter()
                .filter(|&&x| x < target)
                .max()
                .map_or(-1, |&x| x as i64);
            let above = pivots
                .iter()
                .filter(|&&x| x > target)
                .min()
                .map_or(n as i64, |&x| x as i64);
            (above - below - 1) as f64
        })
        .collect();
    let s = Summary::of(&sizes);
    Ok(BucketCheck {
        empirical_mean: s.mean,
        stderr: s.stderr,
        model,
        z: (s.mean - model) / s.stderr,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterRecallCheck {
    pub empirical_mean: f64,
    pub stderr: f64,
    pub model_paper: f64,
    pub model_expected_min: f64,
}

/// Empirical recall of one filter round against both recall models.
pub fn validate_filter_recall(
    n: usize,
    k: usize,
    l: usize,
    s: usize,
    trials: usize,
    seed: u64,
    parallelism: usize,
) -> Result<FilterRecallCheck> {
    if trials < 100 {
        return Err(ListkError::invalid(
            "recall validation needs at least 100 trials",
        ));
    }
    let mut spec = SimSpec::new(SimAlgorithm::LtFilter, n, KSpec::Count(k), l);
    spec.survivors = vec![s];
    spec.trials = trials;
    spec.seed = seed;
    spec.parallelism = parallelism;
    let row = run_simulation(&spec)?.rows.remove(0);
    let recall = row.recall.expect("filter rows carry recall");
    Ok(FilterRecallCheck {
        empirical_mean: recall.mean,
        stderr: recall.stderr,
        model_paper: row.model_recall_paper.expect("filter rows carry models"),
        model_expected_min: row
            .model_recall_expected_min
            .expect("filter rows carry models"),
    })
}
