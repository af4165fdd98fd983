use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use listk_core::domain::io::{
    read_labels, read_results, write_metrics_csv, LabelRecord, MetricRow, ResultRecord,
};
use listk_core::domain::{ndcg_at_k, spearman};
use listk_core::{DocId, Ranking};
use serde::Serialize;

use crate::args::{open_input, with_output};
use crate::manifest::{manifest_path, ManifestBuilder};
use crate::usage;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Results JSONL written by `listk run`.
    #[arg(long)]
    pub results: PathBuf,
    /// Labels JSONL: `{"query_id", "doc_id", "relevance"}`.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Metrics CSV; stdout by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalConfig<'a> {
    results: &'a PathBuf,
    labels: &'a PathBuf,
    k: usize,
}

/// Assigns per-query dense ids to external id strings.
#[derive(Default)]
struct Interner(HashMap<String, DocId>);

impl Interner {
    fn id(&mut self, key: String) -> DocId {
        let next = DocId(self.0.len() as u32);
        *self.0.entry(key).or_insert(next)
    }
}

/// Metrics for one query. `results` must be sorted by rank.
pub fn query_metrics(
    query_id: &str,
    results: &[&ResultRecord],
    labels: &[&LabelRecord],
    k: usize,
) -> Result<Vec<MetricRow>> {
    let mut ids = Interner::default();
    let ranked: Vec<DocId> = results
        .iter()
        .map(|r| ids.id(r.doc_id.to_string()))
        .collect();
    let gains: HashMap<DocId, f64> = labels
        .iter()
        .map(|l| (ids.id(l.doc_id.to_string()), l.relevance))
        .collect();
    let row = |metric: &str, value: f64| MetricRow {
        query_id: query_id.to_string(),
        metric: metric.to_string(),
        k,
        value,
    };

    // Labels ordered by relevance, file order among ties.
    let mut by_relevance: Vec<(DocId, f64)> = labels
        .iter()
        .map(|l| (ids.id(l.doc_id.to_string()), l.relevance))
        .collect();
    by_relevance.sort_by(|a, b| b.1.total_cmp(&a.1));

    let relevant: Vec<DocId> = by_relevance
        .iter()
        .filter(|(_, g)| *g > 0.0)
        .map(|(d, _)| *d)
        .collect();
    let mut rows = Vec::new();
    if relevant.is_empty() {
        return Err(usage(format!(
            "query {query_id} has no relevant labels; recall is undefined"
        )));
    }
    let truth: HashSet<DocId> = relevant.iter().take(k).copied().collect();
    let hits = ranked.iter().take(k).filter(|d| truth.contains(d)).count();
    rows.push(row("recall", hits as f64 / truth.len() as f64));
    rows.push(row("ndcg", ndcg_at_k(&ranked, &gains, k)?));

    let result_set: HashSet<DocId> = ranked.iter().copied().collect();
    let label_set: HashSet<DocId> = gains.keys().copied().collect();
    if ranked.len() >= 2 && result_set.len() == ranked.len() && result_set == label_set {
        let truth_rank = Ranking::new(by_relevance.iter().map(|(d, _)| *d).collect());
        rows.push(row(
            "spearman",
            spearman(&Ranking::new(ranked), &truth_rank)?,
        ));
    }
    Ok(rows)
}

pub fn evaluate(
    results: &[ResultRecord],
    labels: &[LabelRecord],
    k: usize,
) -> Result<Vec<MetricRow>> {
    if k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let mut by_query: BTreeMap<&str, Vec<&ResultRecord>> = BTreeMap::new();
    for r in results {
        by_query.entry(r.query_id.as_str()).or_default().push(r);
    }
    let mut labels_by_query: HashMap<&str, Vec<&LabelRecord>> = HashMap::new();
    for l in labels {
        labels_by_query
            .entry(l.query_id.as_str())
            .or_default()
            .push(l);
    }
    let mut rows = Vec::new();
    for (qid, mut rs) in by_query {
        let ls = labels_by_query.get(qid).ok_or_else(|| {
            usage(format!(
                "query {qid} appears in the results but not in the labels"
            ))
        })?;
        rs.sort_by_key(|r| r.rank);
        rows.extend(query_metrics(qid, &rs, ls, k)?);
    }
    Ok(rows)
}

pub fn run(a: EvalArgs) -> Result<()> {
    let started = ManifestBuilder::start("eval");
    let results = read_results(open_input(&a.results)?)
        .with_context(|| format!("reading {}", a.results.display()))?;
    let labels = read_labels(open_input(&a.labels)?)
        .with_context(|| format!("reading {}", a.labels.display()))?;
    let rows = evaluate(&results, &labels, a.k)?;
    with_output(a.out.as_deref(), |w| Ok(write_metrics_csv(w, &rows)?))?;
    if let Some(path) = manifest_path(a.manifest.as_deref(), a.out.as_deref()) {
        let config = EvalConfig {
            results: &a.results,
            labels: &a.labels,
            k: a.k,
        };
        started
            .finish(config, None, 1, None, a.out.iter().cloned().collect())?
            .write(&path)?;
    }
    Ok(())
}
