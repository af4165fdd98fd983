use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use listk_core::algorithms::{PivotStrategy, ProxyScores};
use listk_core::costmodel::{CostModelParams, RecallMode};
use listk_core::domain::brute_force_topk;
use listk_core::domain::io::{read_corpus, read_queries, write_jsonl, ResultRecord};
use listk_core::optimizer::{optimize_plan, Aggregator, CostEstimate, PlanConfig, PlanRequest};
use listk_core::oracle::{
    corrupted_scores, BackendConfig, NoisyOracleParams, OracleConfig, OracleLog,
};
use listk_core::plan::{execute_plan, ExecOptions};
use listk_core::simulator::trial_seed;
use listk_core::{Corpus, ListkError, Oracle, Query};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::{create_output, open_input, CoefficientArgs, RecallModeArg};
use crate::manifest::{manifest_path, ManifestBuilder};
use crate::usage;

/// Offsets the proxy noise stream from the noisy oracle's.
const PROXY_SALT: u64 = 0x7072_6f78_7900_0000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    Perfect,
    Noisy,
    Remote,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlanKind {
    Lttopk,
    Lmpq,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum PivotArg {
    #[default]
    Random,
    Proxy,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Corpus JSONL: `{"id", "text", "score"?}`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Queries JSONL: `{"id", "text"}`.
    #[arg(long, conflicts_with = "query", required_unless_present = "query")]
    pub queries: Option<PathBuf>,
    /// A single query text, run under id `q0`.
    #[arg(long)]
    pub query: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Oracle list size. Taken from `--config` when one is given.
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long, value_enum)]
    pub oracle: Option<OracleKind>,
    /// Oracle config file (TOML or JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Correlation of the noisy oracle with the true scores.
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,

    /// Let the optimizer choose the plan.
    #[arg(long)]
    pub auto_plan: bool,
    /// Recall target for `--auto-plan`.
    #[arg(long)]
    pub recall: Option<f64>,
    #[arg(long, value_enum, default_value_t)]
    pub recall_mode: RecallModeArg,
    #[command(flatten)]
    pub coefficients: CoefficientArgs,
    /// Explicit aggregator. Takes precedence over `--auto-plan`.
    #[arg(long, value_enum)]
    pub plan: Option<PlanKind>,
    #[arg(long, conflicts_with = "filter_s")]
    pub no_filter: bool,
    /// Run the tournament filter keeping this many documents per bin.
    #[arg(long)]
    pub filter_s: Option<usize>,
    #[arg(long)]
    pub p_select: Option<usize>,
    #[arg(long)]
    pub p_sort: Option<usize>,
    #[arg(long)]
    pub p_physical: Option<usize>,
    #[arg(long)]
    pub early_stopping: bool,
    #[arg(long, value_enum, default_value_t)]
    pub pivots: PivotArg,
    /// Correlation of the simulated proxy scores used by `--pivots proxy`.
    #[arg(long, default_value_t = 0.8)]
    pub proxy_rho: f64,
    /// Pairwise re-sort of the first few results.
    #[arg(long, default_value_t = 0)]
    pub refine_top: usize,
    /// Order the whole corpus instead of selecting K.
    #[arg(long)]
    pub full_sort: bool,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    /// Compare every result with brute force and fail on any difference.
    #[arg(long)]
    pub self_check: bool,
    /// Results JSONL.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// JSONL log of every oracle call.
    #[arg(long)]
    pub oracle_log: Option<PathBuf>,
}

#[derive(Serialize)]
struct QueryPlan {
    query_id: String,
    k: usize,
    plan: PlanConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimate: Option<CostEstimate>,
    stage_costs: BTreeMap<String, u64>,
}

#[derive(Serialize)]
struct RunConfig<'a> {
    corpus: &'a PathBuf,
    queries: Option<&'a PathBuf>,
    n: usize,
    k: usize,
    oracle: &'a OracleConfig,
    plan_source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    recall_target: Option<f64>,
    recall_mode: RecallMode,
    params: CostModelParams,
    exec: ExecOptions,
    #[serde(skip_serializing_if = "Option::is_none")]
    proxy_rho: Option<f64>,
    self_check: bool,
    plans: Vec<QueryPlan>,
}

fn oracle_config(a: &RunArgs) -> Result<OracleConfig> {
    if let Some(path) = &a.config {
        let cfg =
            OracleConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
        if let Some(l) = a.l.filter(|&l| l != cfg.list_size) {
            return Err(usage(format!(
                "--l {l} disagrees with list_size {} in the config",
                cfg.list_size
            )));
        }
        let kind = match cfg.backend {
            BackendConfig::Perfect => OracleKind::Perfect,
            BackendConfig::Noisy(_) => OracleKind::Noisy,
            BackendConfig::Remote(_) => OracleKind::Remote,
        };
        if let Some(k) = a.oracle.filter(|&k| k != kind) {
            return Err(usage(format!(
                "--oracle {k:?} disagrees with the config backend"
            )));
        }
        return Ok(cfg);
    }
    let list_size =
        a.l.ok_or_else(|| usage("--l is required without --config"))?;
    let backend = match a.oracle.unwrap_or(OracleKind::Perfect) {
        OracleKind::Perfect => BackendConfig::Perfect,
        OracleKind::Noisy => BackendConfig::Noisy(NoisyOracleParams {
            proxy_correlation: a.rho,
            seed: a.seed,
        }),
        OracleKind::Remote => return Err(usage("--oracle remote needs --config")),
    };
    let cfg = OracleConfig { list_size, backend };
    cfg.validate()?;
    Ok(cfg)
}

fn load_queries(a: &RunArgs) -> Result<Vec<Query>> {
    let queries = match (&a.queries, &a.query) {
        (Some(path), _) => read_queries(open_input(path)?)
            .with_context(|| format!("reading {}", path.display()))?,
        (None, Some(text)) => vec![Query::new("q0", text.clone())],
        (None, None) => return Err(usage("--queries or --query is required")),
    };
    if queries.is_empty() {
        return Err(usage("no queries to run"));
    }
    Ok(queries)
}

struct ResolvedPlan {
    config: PlanConfig,
    estimate: Option<CostEstimate>,
    source: &'static str,
}

fn resolve_plan(
    a: &RunArgs,
    n: usize,
    k: usize,
    l: usize,
    params: &CostModelParams,
) -> Result<ResolvedPlan> {
    let mode: RecallMode = a.recall_mode.into();
    if let Some(kind) = a.plan {
        if a.full_sort && a.filter_s.is_some() {
            return Err(usage("--filter-s does not apply to --full-sort"));
        }
        let config = PlanConfig {
            use_filter: a.filter_s.is_some(),
            survivors: a.filter_s,
            agg: match kind {
                PlanKind::Lttopk => Aggregator::LtTopK,
                PlanKind::Lmpq => Aggregator::Lmpq,
            },
            p_select: a.p_select.unwrap_or(1),
            p_sort: a.p_sort.unwrap_or(1),
        };
        let needs_select = !a.full_sort;
        if kind == PlanKind::Lmpq && (a.p_sort.is_none() || needs_select && a.p_select.is_none()) {
            return Err(usage(
                "--plan lmpq needs --p-sort, and --p-select unless sorting fully",
            ));
        }
        if kind == PlanKind::Lttopk && (a.p_select.is_some() || a.p_sort.is_some()) {
            return Err(usage("--p-select and --p-sort only apply to --plan lmpq"));
        }
        config.validate(l)?;
        return Ok(ResolvedPlan {
            config,
            estimate: None,
            source: "explicit",
        });
    }
    if !a.auto_plan {
        return Err(usage("give an explicit --plan or pass --auto-plan"));
    }
    let req = if a.full_sort {
        PlanRequest::full_sort(n, l)
    } else {
        let recall = a
            .recall
            .ok_or_else(|| usage("--auto-plan needs --recall"))?;
        PlanRequest::new(n, k.min(n), l, recall)
    };
    let (config, estimate) = optimize_plan(&req, params, mode)?;
    Ok(ResolvedPlan {
        config,
        estimate: Some(estimate),
        source: "auto",
    })
}

pub fn run(a: RunArgs) -> Result<()> {
    let started = ManifestBuilder::start("run");
    if a.parallelism == 0 {
        return Err(usage("--parallelism must be at least 1"));
    }
    let corpus: Corpus = read_corpus(open_input(&a.corpus)?)
        .with_context(|| format!("reading {}", a.corpus.display()))?;
    let queries = load_queries(&a)?;
    let oracle_cfg = oracle_config(&a)?;
    let l = oracle_cfg.list_size;
    let n = corpus.len();
    let k = match (a.k, a.full_sort) {
        (_, true) => n,
        (Some(k), false) if k >= 1 => k,
        (Some(_), false) => return Err(usage("--k must be at least 1")),
        (None, false) => return Err(usage("--k is required unless --full-sort is given")),
    };
    let params = a.coefficients.params()?;
    let plan = resolve_plan(&a, n, k, l, &params)?;

    let exec = ExecOptions {
        physical_pivots: a.p_physical,
        early_stopping: a.early_stopping,
        pivot_strategy: match a.pivots {
            PivotArg::Random => PivotStrategy::Random,
            PivotArg::Proxy => PivotStrategy::Proxy,
        },
        filter_rounds: 1,
        refine_top: a.refine_top,
        full_sort: a.full_sort,
    };
    let proxy = match a.pivots {
        PivotArg::Proxy => Some(ProxyScores(corrupted_scores(
            &corpus,
            a.proxy_rho,
            a.seed ^ PROXY_SALT,
        )?)),
        PivotArg::Random => None,
    };

    let mut oracle: Oracle = oracle_cfg.build(&corpus)?.with_parallelism(a.parallelism)?;
    let log = match &a.oracle_log {
        Some(path) => {
            let sink = std::fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            let log = Arc::new(OracleLog::new(Box::new(sink)));
            oracle = oracle.with_log(log.clone());
            Some(log)
        }
        None => None,
    };
    let truth = if a.self_check {
        Some(brute_force_topk(&corpus, k, true).context("--self-check needs a scored corpus")?)
    } else {
        None
    };

    let docs = corpus.doc_refs();
    let mut records = Vec::new();
    let mut plans = Vec::new();
    for (qi, query) in queries.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(a.seed, qi));
        let outcome = execute_plan(
            &docs,
            query,
            k,
            &plan.config,
            &exec,
            &oracle,
            proxy.as_ref(),
            &mut rng,
        )?;
        if let Some(truth) = &truth {
            if outcome.result.ids != truth.ids {
                return Err(ListkError::ExactnessViolation(format!(
                    "query {}: result differs from brute force in {} of {} positions",
                    query.id,
                    outcome
                        .result
                        .ids
                        .iter()
                        .zip(&truth.ids)
                        .filter(|(a, b)| a != b)
                        .count()
                        + outcome.result.ids.len().abs_diff(truth.ids.len()),
                    truth.ids.len()
                ))
                .into());
            }
        }
        for (i, id) in outcome.result.ids.iter().enumerate() {
            let doc_id = corpus
                .external_id(*id)
                .cloned()
                .expect("every corpus document has an external id");
            records.push(ResultRecord {
                query_id: query.id.clone(),
                rank: i + 1,
                doc_id,
                stage_costs: outcome.stage_costs.clone(),
            });
        }
        plans.push(QueryPlan {
            query_id: query.id.clone(),
            k,
            plan: plan.config,
            estimate: plan.estimate.clone(),
            stage_costs: outcome.stage_costs,
        });
    }

    let mut w = create_output(&a.out)?;
    write_jsonl(&mut w, &records)?;
    std::io::Write::flush(&mut w)?;
    let mut outputs = vec![a.out.clone()];
    if let (Some(log), Some(path)) = (&log, &a.oracle_log) {
        log.flush()?;
        outputs.push(path.clone());
    }

    let config = RunConfig {
        corpus: &a.corpus,
        queries: a.queries.as_ref(),
        n,
        k,
        oracle: &oracle_cfg,
        plan_source: plan.source,
        recall_target: a.recall.filter(|_| plan.source == "auto"),
        recall_mode: a.recall_mode.into(),
        params,
        exec,
        proxy_rho: proxy.as_ref().map(|_| a.proxy_rho),
        self_check: a.self_check,
        plans,
    };
    let path =
        manifest_path(a.manifest.as_deref(), Some(&a.out)).expect("run always has an output");
    started
        .finish(
            config,
            Some(a.seed),
            a.parallelism,
            Some(oracle.stats()),
            outputs,
        )?
        .write(&path)?;
    Ok(())
}
