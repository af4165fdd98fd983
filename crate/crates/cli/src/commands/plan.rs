use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use listk_core::optimizer::{PlanReport, PlanRequest};

use crate::args::{with_output, write_json, CoefficientArgs, RecallModeArg};
use crate::manifest::{manifest_path, ManifestBuilder};
use crate::usage;

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[arg(long)]
    pub n: usize,
    /// Required unless `--full-sort`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub l: usize,
    /// Minimum predicted recall, in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub recall: f64,
    /// Order the whole corpus.
    #[arg(long, conflicts_with = "k")]
    pub full_sort: bool,
    #[arg(long, value_enum, default_value_t)]
    pub recall_mode: RecallModeArg,
    #[command(flatten)]
    pub coefficients: CoefficientArgs,
    /// Plan JSON; stdout by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn request_from(
    n: usize,
    k: Option<usize>,
    l: usize,
    recall: f64,
    full_sort: bool,
) -> Result<PlanRequest> {
    let req = if full_sort {
        PlanRequest {
            recall_target: recall,
            ..PlanRequest::full_sort(n, l)
        }
    } else {
        let k = k.ok_or_else(|| usage("--k is required unless --full-sort is given"))?;
        PlanRequest::new(n, k, l, recall)
    };
    req.validate()?;
    Ok(req)
}

pub fn run(a: PlanArgs) -> Result<()> {
    let started = ManifestBuilder::start("plan");
    let req = request_from(a.n, a.k, a.l, a.recall, a.full_sort)?;
    let params = a.coefficients.params()?;
    let report = PlanReport::build(&req, &params, a.recall_mode.into())?;
    with_output(a.out.as_deref(), |w| write_json(w, &report))?;
    if let Some(path) = manifest_path(a.manifest.as_deref(), a.out.as_deref()) {
        started
            .finish(&report, None, 1, None, a.out.iter().cloned().collect())?
            .write(&path)?;
    }
    Ok(())
}
