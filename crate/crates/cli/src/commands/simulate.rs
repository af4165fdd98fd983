use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use listk_core::simulator::{run_simulation_with, KSpec, SimAlgorithm, SimSpec};
use serde::Serialize;

use crate::args::{with_output, write_json, CoefficientArgs, IntList};
use crate::manifest::{manifest_path, ManifestBuilder};
use crate::usage;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AlgoArg {
    LmpqSort,
    LmpqSelect,
    LtTopk,
    LtFilter,
    Pairwise,
}

impl From<AlgoArg> for SimAlgorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::LmpqSort => SimAlgorithm::LmpqSort,
            AlgoArg::LmpqSelect => SimAlgorithm::LmpqSelect,
            AlgoArg::LtTopk => SimAlgorithm::LtTopK,
            AlgoArg::LtFilter => SimAlgorithm::LtFilter,
            AlgoArg::Pairwise => SimAlgorithm::Pairwise,
        }
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub algo: AlgoArg,
    /// Corpus size.
    #[arg(long)]
    pub n: usize,
    /// Result size. Ignored by lmpq-sort.
    #[arg(long, conflicts_with = "psi")]
    pub k: Option<usize>,
    /// Result size as a fraction of N.
    #[arg(long)]
    pub psi: Option<f64>,
    /// Oracle list size.
    #[arg(long, default_value_t = 20)]
    pub l: usize,
    /// Logical pivot counts: `6`, `2,4,8` or `1..12`.
    #[arg(long)]
    pub p: Option<IntList>,
    /// Physical pivots per call.
    #[arg(long)]
    pub p_physical: Option<usize>,
    #[arg(long)]
    pub early_stopping: bool,
    /// Filter survivor counts, same syntax as `--p`.
    #[arg(long)]
    pub s: Option<IntList>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads. Outputs do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    #[command(flatten)]
    pub coefficients: CoefficientArgs,
    /// Summary CSV; stdout when neither output is given.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full results as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    spec: &'a SimSpec,
    params: listk_core::costmodel::CostModelParams,
}

pub fn spec_from_args(a: &SimulateArgs) -> Result<SimSpec> {
    let algorithm = SimAlgorithm::from(a.algo);
    let k = match (a.k, a.psi, algorithm) {
        (_, _, SimAlgorithm::LmpqSort) => KSpec::Count(a.n),
        (Some(k), None, _) => KSpec::Count(k),
        (None, Some(psi), _) => KSpec::Psi(psi),
        _ => {
            return Err(usage(format!(
                "--algo {} needs --k or --psi",
                algorithm.name()
            )))
        }
    };
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if a.parallelism == 0 {
        return Err(usage("--parallelism must be at least 1"));
    }
    let mut spec = SimSpec::new(algorithm, a.n, k, a.l);
    spec.pivots = a.p.clone().map(|l| l.0).unwrap_or_default();
    spec.physical_pivots = a.p_physical;
    spec.early_stopping = a.early_stopping;
    spec.survivors = a.s.clone().map(|l| l.0).unwrap_or_default();
    spec.trials = a.trials;
    spec.seed = a.seed;
    spec.parallelism = a.parallelism;
    spec.validate()?;
    Ok(spec)
}

pub fn run(a: SimulateArgs) -> Result<()> {
    let started = ManifestBuilder::start("simulate");
    let spec = spec_from_args(&a)?;
    let params = a.coefficients.params()?;
    let result = run_simulation_with(&spec, &params)?;

    let mut outputs = Vec::new();
    if a.out.is_some() || a.json.is_none() {
        with_output(a.out.as_deref(), |w| Ok(result.write_csv(w)?))?;
        outputs.extend(a.out.clone());
    }
    if let Some(path) = &a.json {
        with_output(Some(path), |w| write_json(w, &result))?;
        outputs.push(path.clone());
    }
    let first_out = a.out.as_deref().or(a.json.as_deref());
    if let Some(path) = manifest_path(a.manifest.as_deref(), first_out) {
        let config = SimulateConfig {
            spec: &spec,
            params,
        };
        started
            .finish(config, Some(spec.seed), spec.parallelism, None, outputs)?
            .write(&path)?;
    }
    Ok(())
}
