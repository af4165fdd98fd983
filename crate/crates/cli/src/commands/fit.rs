use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use listk_core::costmodel::{fit_beta, CoefficientsFile, FitSample};
use listk_core::simulator::{run_simulation, KSpec, SimAlgorithm, SimSpec};
use serde::Serialize;

use crate::args::{with_output, write_json, IntList};
use crate::manifest::{manifest_path, ManifestBuilder};
use crate::usage;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FitAlgo {
    LmpqSort,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long, value_enum, default_value = "lmpq-sort")]
    pub algo: FitAlgo,
    #[arg(long, default_value_t = 20)]
    pub l: usize,
    #[arg(long, default_value_t = 6)]
    pub p: usize,
    /// Corpus sizes to simulate; at least two distinct values.
    #[arg(long)]
    pub n: IntList,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    /// Coefficients JSON; stdout by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct FitConfig<'a> {
    algorithm: &'static str,
    l: usize,
    p: usize,
    n: &'a [usize],
    trials: usize,
}

pub fn fit(a: &FitArgs) -> Result<CoefficientsFile> {
    let grid: BTreeSet<usize> = a.n.0.iter().copied().collect();
    if grid.len() < 2 {
        return Err(usage("--n needs at least two distinct corpus sizes"));
    }
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let FitAlgo::LmpqSort = a.algo;
    let mut samples = Vec::with_capacity(grid.len());
    for &n in &grid {
        let mut spec = SimSpec::new(SimAlgorithm::LmpqSort, n, KSpec::Count(n), a.l);
        spec.pivots = vec![a.p];
        spec.trials = a.trials;
        spec.seed = a.seed;
        spec.parallelism = a.parallelism;
        let result = run_simulation(&spec)?;
        samples.push(FitSample {
            n,
            mean_calls: result.rows[0].calls.mean,
        });
    }
    let beta_sort = fit_beta(&samples, a.l, a.p)?;
    Ok(CoefficientsFile {
        beta_sort,
        c_select: 0.0,
        fitted_from: samples,
    })
}

pub fn run(a: FitArgs) -> Result<()> {
    let started = ManifestBuilder::start("fit");
    let coeffs = fit(&a)?;
    with_output(a.out.as_deref(), |w| write_json(w, &coeffs))?;
    if let Some(path) = manifest_path(a.manifest.as_deref(), a.out.as_deref()) {
        let grid: Vec<usize> = a.n.0.clone();
        let config = FitConfig {
            algorithm: "lmpq_sort",
            l: a.l,
            p: a.p,
            n: &grid,
            trials: a.trials,
        };
        started
            .finish(
                config,
                Some(a.seed),
                a.parallelism,
                None,
                a.out.iter().cloned().collect(),
            )?
            .write(&path)?;
    }
    Ok(())
}
