//! Flag parsers and small helpers shared by the subcommands.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use listk_core::costmodel::{CoefficientsFile, CostModelParams, RecallMode};

/// Parses `3`, `2,4,8`, `1..12` or `1..=12`. Ranges are inclusive.
pub fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad integer {t:?}: {e}"))
    };
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b) = (num(a)?, num(b)?);
        if a > b {
            return Err(format!("empty range {s}"));
        }
        return Ok((a..=b).collect());
    }
    let v = s.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
    if v.is_empty() {
        return Err("empty list".into());
    }
    Ok(v)
}

/// An integer list flag value; see [`parse_list`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntList(pub Vec<usize>);

impl std::str::FromStr for IntList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_list(s).map(IntList)
    }
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum RecallModeArg {
    Paper,
    #[default]
    ExpectedMin,
}

impl From<RecallModeArg> for RecallMode {
    fn from(m: RecallModeArg) -> Self {
        match m {
            RecallModeArg::Paper => RecallMode::Paper,
            RecallModeArg::ExpectedMin => RecallMode::ExpectedMin,
        }
    }
}

/// Cost model coefficients, either inline or from a `fit` output file.
#[derive(Args, Debug, Clone)]
pub struct CoefficientArgs {
    /// Linear coefficient of the quicksort model.
    #[arg(long, conflicts_with = "coefficients")]
    pub beta: Option<f64>,
    /// Coefficients JSON written by `listk fit`.
    #[arg(long)]
    pub coefficients: Option<PathBuf>,
}

impl CoefficientArgs {
    pub fn params(&self) -> Result<CostModelParams> {
        let params = match (&self.coefficients, self.beta) {
            (Some(path), _) => CoefficientsFile::load(path)
                .with_context(|| format!("loading coefficients {}", path.display()))?
                .params(),
            (None, Some(beta)) => CostModelParams {
                beta_sort: beta,
                ..CostModelParams::default()
            },
            (None, None) => CostModelParams::default(),
        };
        params.validate()?;
        Ok(params)
    }
}

pub fn open_input(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn create_output(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Writes to `path`, or to stdout without one.
pub fn with_output(
    path: Option<&Path>,
    f: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create_output(p)?;
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

pub fn write_json(w: &mut dyn Write, value: &impl serde::Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}
