use anyhow::Result;
use clap::Args;
use listk_core::costmodel::{
    optimal_pivot_select, optimal_pivot_select_closed_form, optimal_pivot_sort,
    optimal_pivot_sort_real,
};
use serde::Serialize;

use crate::args::write_json;

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[arg(long, default_value_t = 20)]
    pub l: usize,
    /// K / N for the quickselect optimum; near zero when omitted.
    #[arg(long)]
    pub psi: Option<f64>,
}

#[derive(Serialize)]
struct Tuning {
    l: usize,
    psi: f64,
    p_sort: usize,
    p_sort_continuous: f64,
    p_select: usize,
    p_select_small_psi: f64,
}

const SMALL_PSI: f64 = 1e-9;

pub fn run(a: TuneArgs) -> Result<()> {
    let psi = a.psi.unwrap_or(SMALL_PSI);
    let t = Tuning {
        l: a.l,
        psi,
        p_sort: optimal_pivot_sort(a.l)?,
        p_sort_continuous: optimal_pivot_sort_real(a.l)?,
        p_select: optimal_pivot_select(a.l, psi)?,
        p_select_small_psi: optimal_pivot_select_closed_form(a.l),
    };
    write_json(&mut std::io::stdout().lock(), &t)
}
