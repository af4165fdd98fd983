//! Closed-form call-count and recall models, pivot tuning and coefficient
//! fitting. Costs are expected oracle calls under a perfect oracle.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{DiscreteCDF, Poisson};

use crate::error::{ListkError, Result};

/// Fitted lower-order terms of the quicksort and quickselect models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModelParams {
    /// Coefficient of the linear term of the quicksort model.
    pub beta_sort: f64,
    /// Constant term of the quickselect model.
    pub c_select: f64,
}

impl Default for CostModelParams {
    fn default() -> Self {
        CostModelParams {
            beta_sort: 0.1,
            c_select: 0.0,
        }
    }
}

impl CostModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_sort >= 0.0 && self.beta_sort.is_finite() && self.c_select.is_finite()) {
            return Err(ListkError::invalid(format!(
                "invalid cost model coefficients {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSample {
    #[serde(rename = "N")]
    pub n: usize,
    pub mean_calls: f64,
}

/// On-disk coefficients with the data they were fitted from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientsFile {
    pub beta_sort: f64,
    pub c_select: f64,
    #[serde(default)]
    pub fitted_from: Vec<FitSample>,
}

impl CoefficientsFile {
    pub fn params(&self) -> CostModelParams {
        CostModelParams {
            beta_sort: self.beta_sort,
            c_select: self.c_select,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: Self = serde_json::from_str(&text)?;
        file.params().validate()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// `K / N`, in `(0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct PsiRatio(f64);

impl PsiRatio {
    pub fn new(psi: f64) -> Result<Self> {
        if !(psi > 0.0 && psi <= 1.0) {
            return Err(ListkError::invalid(format!(
                "psi must lie in (0, 1], got {psi}"
            )));
        }
        Ok(PsiRatio(psi))
    }

    pub fn from_counts(k: usize, n: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(ListkError::invalid(format!(
                "need 1 <= K <= N, got K = {k}, N = {n}"
            )));
        }
        Self::new(k as f64 / n as f64)
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Expected number of top-K documents per filter bin, `K * L / N`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct PoissonLoad(f64);

impl PoissonLoad {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ListkError::invalid(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(PoissonLoad(lambda))
    }

    pub fn from_counts(n: usize, k: usize, l: usize) -> Result<Self> {
        if n == 0 {
            return Err(ListkError::EmptyCorpus);
        }
        Self::new((k * l) as f64 / n as f64)
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Which filter recall model to evaluate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallMode {
    /// `min(1, P(M <= S-1) + (S/λ) P(M >= S))`.
    Paper,
    /// `E[min(M, S)] / λ`: the expected fraction of a bin's top-K members
    /// that survive.
    #[default]
    ExpectedMin,
}

fn check_list_size(l: usize) -> Result<()> {
    if l < 2 {
        return Err(ListkError::invalid("list size L must be at least 2"));
    }
    Ok(())
}

fn check_pivots(l: usize, p: usize) -> Result<()> {
    check_list_size(l)?;
    if p == 0 || p >= l {
        return Err(ListkError::invalid(format!(
            "pivot count must satisfy 1 <= P < L (P = {p}, L = {l})"
        )));
    }
    Ok(())
}

/// Tournament top-K: each call eliminates `L - 1` documents, and every later
/// tournament climbs a tree of depth `log_L N`.
pub fn cost_lt_topk(n: usize, k: usize, l: usize) -> Result<f64> {
    check_list_size(l)?;
    if n == 0 || k == 0 {
        return Err(ListkError::invalid("N and K must be at least 1"));
    }
    let (n, k, l) = (n as f64, k as f64, l as f64);
    Ok((n + (k - 1.0) * n.ln() / l.ln()) / (l - 1.0))
}

/// Leading coefficient of the quicksort model: calls per `N ln N`.
fn sort_coefficient(l: usize, p: usize) -> f64 {
    1.0 / ((l - p) as f64 * ((p + 1) as f64).ln())
}

pub fn cost_lmpq_sort(n: usize, l: usize, p: usize, params: &CostModelParams) -> Result<f64> {
    check_pivots(l, p)?;
    if n <= 1 {
        return Ok(0.0);
    }
    let nf = n as f64;
    Ok(nf * nf.ln() * sort_coefficient(l, p) + params.beta_sort * nf)
}

/// Quickselect calls per document at ratio `psi`.
fn select_coefficient(l: usize, p: usize, psi: f64) -> Result<f64> {
    let e = (p + 1) as i32;
    let denom = (l - p) as f64 * ((p as f64 - 1.0) + psi.powi(e) + (1.0 - psi).powi(e));
    if denom <= 1e-12 {
        return Err(ListkError::invalid(
            "quickselect model denominator vanishes",
        ));
    }
    Ok((p + 1) as f64 / denom)
}

pub fn cost_lmpq_select(
    n: usize,
    k: usize,
    l: usize,
    p: usize,
    params: &CostModelParams,
) -> Result<f64> {
    check_pivots(l, p)?;
    let psi = PsiRatio::from_counts(k, n)?.get();
    Ok(n as f64 * select_coefficient(l, p, psi)? + params.c_select)
}

/// Same as [`cost_lmpq_select`] but parameterized by `psi` directly.
pub fn cost_lmpq_select_psi(
    n: f64,
    psi: PsiRatio,
    l: usize,
    p: usize,
    params: &CostModelParams,
) -> Result<f64> {
    check_pivots(l, p)?;
    Ok(n * select_coefficient(l, p, psi.get())? + params.c_select)
}

/// One call per bin per round.
pub fn cost_lt_filter(n: usize, l: usize) -> Result<usize> {
    check_list_size(l)?;
    if n == 0 {
        return Err(ListkError::EmptyCorpus);
    }
    Ok(n.div_ceil(l))
}

/// Predicted fraction of the true top-K surviving one filter round. `S >= L`
/// keeps every document, so recall is 1.
pub fn recall_lt_filter(n: usize, k: usize, l: usize, s: usize, mode: RecallMode) -> Result<f64> {
    check_list_size(l)?;
    if s == 0 {
        return Err(ListkError::invalid("survivor count S must be at least 1"));
    }
    Ok(1.0 - recall_deficit_lt_filter(n, k, l, s, mode)?)
}

/// The filter recall model as a function of the per-bin load alone.
pub fn recall_poisson(lambda: PoissonLoad, s: usize, mode: RecallMode) -> Result<f64> {
    Ok(1.0 - recall_deficit_poisson(lambda, s, mode)?)
}

/// `1 - recall`, computed from tail probabilities so that it stays positive
/// where the recall itself rounds to 1.
pub fn recall_deficit_poisson(lambda: PoissonLoad, s: usize, mode: RecallMode) -> Result<f64> {
    if s == 0 {
        return Err(ListkError::invalid("survivor count S must be at least 1"));
    }
    let lam = lambda.get();
    let m = Poisson::new(lam).map_err(|e| ListkError::invalid(format!("poisson({lam}): {e}")))?;
    let s64 = s as u64;
    let at_least_s = m.sf(s64 - 1);
    let ratio = s as f64 / lam;
    let deficit = match mode {
        // 1 - P(M <= S-1) - (S/λ) P(M >= S); negative values are clamped.
        RecallMode::Paper => at_least_s * (1.0 - ratio),
        // E[(M - S)+] / λ = P(M >= S) - (S/λ) P(M >= S+1)
        RecallMode::ExpectedMin => at_least_s - ratio * m.sf(s64),
    };
    Ok(deficit.clamp(0.0, 1.0))
}

/// `1 - recall_lt_filter`.
pub fn recall_deficit_lt_filter(
    n: usize,
    k: usize,
    l: usize,
    s: usize,
    mode: RecallMode,
) -> Result<f64> {
    check_list_size(l)?;
    if s == 0 {
        return Err(ListkError::invalid("survivor count S must be at least 1"));
    }
    if s >= l {
        return Ok(0.0);
    }
    recall_deficit_poisson(PoissonLoad::from_counts(n, k, l)?, s, mode)
}

/// Pivot count minimizing the quicksort model: the root of
/// `(L - P) = (P + 1) ln(P + 1)`, then whichever neighbouring integer is
/// cheaper.
pub fn optimal_pivot_sort(l: usize) -> Result<usize> {
    check_list_size(l)?;
    if l <= 3 {
        return argmin_integer(l, &[1, 2], |p| Ok(sort_coefficient(l, p)));
    }
    let root = optimal_pivot_sort_real(l)?;
    argmin_integer(l, &[root.floor() as usize, root.ceil() as usize], |p| {
        Ok(sort_coefficient(l, p))
    })
}

/// Real-valued stationary point of the quicksort model.
pub fn optimal_pivot_sort_real(l: usize) -> Result<f64> {
    check_list_size(l)?;
    let lf = l as f64;
    let f = |p: f64| (lf - p) - (p + 1.0) * (p + 1.0).ln();
    let (mut lo, mut hi) = (1.0, lf - 1.0);
    if f(lo) <= 0.0 {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Pivot count minimizing the quickselect model at ratio `psi`. For small
/// `psi` the closed form `-1 + sqrt(1 + L)` is rounded to the cheaper
/// neighbour; otherwise every `P < L` is tried.
pub fn optimal_pivot_select(l: usize, psi: f64) -> Result<usize> {
    check_list_size(l)?;
    let psi = PsiRatio::new(psi)?.get();
    if l == 2 {
        return Ok(1);
    }
    let cost = |p: usize| select_coefficient(l, p, psi);
    if psi <= 0.01 {
        let root = optimal_pivot_select_closed_form(l);
        argmin_integer(l, &[root.floor() as usize, root.ceil() as usize], cost)
    } else {
        argmin_integer(l, &(1..l).collect::<Vec<_>>(), cost)
    }
}

/// `-1 + sqrt(1 + L)`, the small-`psi` optimum.
pub fn optimal_pivot_select_closed_form(l: usize) -> f64 {
    -1.0 + (1.0 + l as f64).sqrt()
}

/// Brute-force argmin of the quickselect model over `1 <= P < L`.
pub fn optimal_pivot_select_brute(l: usize, psi: f64) -> Result<usize> {
    check_list_size(l)?;
    let psi = PsiRatio::new(psi)?.get();
    argmin_integer(l, &(1..l).collect::<Vec<_>>(), |p| {
        select_coefficient(l, p, psi)
    })
}

/// Clamps candidates into `[1, L - 1]` and returns the cheapest, lowest first on ties.
fn argmin_integer(
    l: usize,
    candidates: &[usize],
    cost: impl Fn(usize) -> Result<f64>,
) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &p in candidates {
        let p = p.clamp(1, l - 1);
        let c = cost(p)?;
        if best.is_none_or(|(bp, bc)| c < bc || (c == bc && p < bp)) {
            best = Some((p, c));
        }
    }
    Ok(best.expect("at least one candidate").0)
}

/// Least-squares `beta` in `calls = N ln N / ((L - P) ln(P + 1)) + beta * N`.
pub fn fit_beta(samples: &[FitSample], l: usize, p: usize) -> Result<f64> {
    check_pivots(l, p)?;
    let first = samples.first().map(|s| s.n);
    if samples.iter().all(|s| Some(s.n) == first) {
        return Err(ListkError::invalid(
            "fitting needs samples at two or more distinct N",
        ));
    }
    let coef = sort_coefficient(l, p);
    let (mut num, mut den) = (0.0, 0.0);
    for s in samples {
        let n = s.n as f64;
        let lead = if s.n <= 1 { 0.0 } else { n * n.ln() * coef };
        num += n * (s.mean_calls - lead);
        den += n * n;
    }
    Ok(num / den)
}

/// Expected size of the bucket containing the element at quantile `psi` after
/// one round with `P` uniform pivots.
pub fn expected_containing_bucket(n: f64, psi: f64, p: usize) -> Result<f64> {
    if p == 0 {
        return Err(ListkError::invalid("pivot count must be at least 1"));
    }
    if !(psi > 0.0 && psi < 1.0) {
        return Err(ListkError::invalid(format!(
            "psi must lie in (0, 1), got {psi}"
        )));
    }
    let e = (p + 1) as i32;
    Ok(n * (2.0 - psi.powi(e) - (1.0 - psi).powi(e)) / (p + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const P: CostModelParams = CostModelParams {
        beta_sort: 0.1,
        c_select: 0.0,
    };

    #[test]
    fn tournament_cost() {
        // (5183 + 9 log_20 5183) / 19, evaluated independently
        assert_relative_eq!(
            cost_lt_topk(5183, 10, 20).unwrap(),
            274.141893,
            epsilon = 1e-5
        );
        assert_relative_eq!(cost_lt_topk(100, 1, 2).unwrap(), 100.0);
        assert_relative_eq!(cost_lt_topk(500, 1, 11).unwrap(), 50.0);
    }

    #[test]
    fn sort_cost() {
        assert_relative_eq!(
            cost_lmpq_sort(1000, 20, 6, &P).unwrap(),
            353.563142,
            epsilon = 1e-5
        );
        assert_eq!(cost_lmpq_sort(1, 20, 6, &P).unwrap(), 0.0);
        assert!(cost_lmpq_sort(1000, 20, 20, &P).is_err());
        let a = cost_lmpq_sort(1000, 20, 6, &P).unwrap();
        let b = cost_lmpq_sort(2000, 20, 6, &P).unwrap();
        assert!(b > 2.0 * a);
    }

    #[test]
    fn select_cost() {
        assert_relative_eq!(
            cost_lmpq_select(1000, 500, 20, 1, &P).unwrap(),
            210.526,
            epsilon = 1e-3
        );
        assert_relative_eq!(
            cost_lmpq_select(1000, 500, 20, 4, &P).unwrap(),
            102.041,
            epsilon = 1e-3
        );
        assert!(cost_lmpq_select(1000, 500, 20, 0, &P).is_err());
    }

    #[test]
    fn filter_cost_and_recall() {
        assert_eq!(cost_lt_filter(5183, 20).unwrap(), 260);
        assert_eq!(cost_lt_filter(20, 20).unwrap(), 1);
        assert_eq!(cost_lt_filter(1, 20).unwrap(), 1);
        let lam = PoissonLoad::new(4.0).unwrap();
        // 5e^-4 + 0.5 (1 - 5e^-4)
        assert_relative_eq!(
            recall_poisson(lam, 2, RecallMode::Paper).unwrap(),
            0.545789097,
            epsilon = 1e-8
        );
        // (4e^-4 + 2 (1 - 5e^-4)) / 4
        assert_relative_eq!(
            recall_poisson(lam, 2, RecallMode::ExpectedMin).unwrap(),
            0.472526542,
            epsilon = 1e-8
        );
        for mode in [RecallMode::Paper, RecallMode::ExpectedMin] {
            assert_relative_eq!(recall_poisson(lam, 200, mode).unwrap(), 1.0, epsilon = 1e-9);
            assert_eq!(recall_lt_filter(5183, 10, 20, 20, mode).unwrap(), 1.0);
        }
    }

    #[test]
    fn deficit_stays_positive_for_light_loads() {
        let d = recall_deficit_lt_filter(5183, 10, 20, 8, RecallMode::ExpectedMin).unwrap();
        assert!(d > 0.0 && d < 1e-12);
    }

    #[test]
    fn paper_mode_is_clamped_for_light_loads() {
        let unclamped = {
            let lam: f64 = 0.05;
            (-lam).exp() + (1.0 - (-lam).exp()) / lam
        };
        assert!(unclamped > 1.0);
        assert_eq!(
            recall_poisson(PoissonLoad::new(0.05).unwrap(), 1, RecallMode::Paper).unwrap(),
            1.0
        );
    }

    #[test]
    fn pivot_tuning() {
        assert_relative_eq!(optimal_pivot_sort_real(20).unwrap(), 6.1, epsilon = 0.05);
        assert_eq!(optimal_pivot_sort(20).unwrap(), 6);
        assert_eq!(optimal_pivot_sort(3).unwrap(), 1);
        assert_relative_eq!(optimal_pivot_select_closed_form(20), 3.5826, epsilon = 1e-4);
        assert_eq!(optimal_pivot_select(20, 1e-9).unwrap(), 4);
        assert_eq!(optimal_pivot_select(2, 0.5).unwrap(), 1);
        for l in [10, 20, 50] {
            assert_eq!(
                optimal_pivot_select(l, 0.001).unwrap(),
                optimal_pivot_select_brute(l, 0.001).unwrap(),
                "L = {l}"
            );
        }
    }

    #[test]
    fn sort_argmin_is_six_for_any_large_n() {
        for n in [100, 1000, 10_000, 100_000] {
            let best = (1..20)
                .min_by(|&a, &b| {
                    cost_lmpq_sort(n, 20, a, &P)
                        .unwrap()
                        .total_cmp(&cost_lmpq_sort(n, 20, b, &P).unwrap())
                })
                .unwrap();
            assert_eq!(best, 6, "N = {n}");
        }
    }

    #[test]
    fn beta_round_trips() {
        let model = |n: usize| cost_lmpq_sort(n, 20, 6, &P).unwrap();
        let samples: Vec<FitSample> = [100, 1000, 10_000]
            .iter()
            .map(|&n| FitSample {
                n,
                mean_calls: model(n),
            })
            .collect();
        assert_relative_eq!(fit_beta(&samples, 20, 6).unwrap(), 0.1, epsilon = 1e-9);
        assert_relative_eq!(fit_beta(&samples[..2], 20, 6).unwrap(), 0.1, epsilon = 1e-9);
        let same = [
            FitSample {
                n: 1000,
                mean_calls: 1.0,
            },
            FitSample {
                n: 1000,
                mean_calls: 2.0,
            },
        ];
        assert!(fit_beta(&same, 20, 6).is_err());
    }

    #[test]
    fn bucket_expectation() {
        assert_relative_eq!(expected_containing_bucket(1000.0, 0.5, 1).unwrap(), 750.0);
        assert_relative_eq!(
            expected_containing_bucket(1000.0, 1e-12, 4).unwrap(),
            200.0,
            epsilon = 1e-6
        );
        assert!(expected_containing_bucket(1000.0, 0.5, 0).is_err());
    }

    #[test]
    fn coefficients_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coef.json");
        let f = CoefficientsFile {
            beta_sort: 0.12,
            c_select: 0.0,
            fitted_from: vec![FitSample {
                n: 100,
                mean_calls: 9.5,
            }],
        };
        f.save(&path).unwrap();
        assert_eq!(CoefficientsFile::load(&path).unwrap(), f);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"N\": 100"));
    }

    proptest! {
        #[test]
        fn select_cost_is_symmetric(k in 1usize..1000, p in 1usize..19) {
            let a = cost_lmpq_select(1000, k, 20, p, &P).unwrap();
            let b = cost_lmpq_select(1000, 1000 - k, 20, p, &P).unwrap_or(a);
            if k < 1000 {
                prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
            }
        }

        #[test]
        fn sort_cost_increases_in_n(n in 2usize..100_000, l in 3usize..64, p in 1usize..63) {
            prop_assume!(p < l);
            prop_assert!(cost_lmpq_sort(n + 1, l, p, &P).unwrap() > cost_lmpq_sort(n, l, p, &P).unwrap());
        }

        #[test]
        fn tuned_pivots_in_range(l in 2usize..200, psi in 1e-6f64..1.0) {
            let s = optimal_pivot_sort(l).unwrap();
            let q = optimal_pivot_select(l, psi).unwrap();
            prop_assert!((1..l).contains(&s));
            prop_assert!((1..l).contains(&q));
        }

        #[test]
        fn containing_bucket_in_range(n in 1.0f64..1e6, psi in 1e-6f64..0.999_999, p in 1usize..64) {
            let e = expected_containing_bucket(n, psi, p).unwrap();
            prop_assert!(e > 0.0 && e <= n);
        }
    }

    #[test]
    fn recall_monotone_on_grid() {
        for mode in [RecallMode::Paper, RecallMode::ExpectedMin] {
            for s in 1..20usize {
                let mut prev = f64::INFINITY;
                for i in 1..=400 {
                    let lam = PoissonLoad::new(i as f64 * 0.05).unwrap();
                    let r = recall_poisson(lam, s, mode).unwrap();
                    assert!(r <= prev + 1e-12, "{mode:?} s={s} lambda={}", lam.get());
                    assert!(r <= recall_poisson(lam, s + 1, mode).unwrap() + 1e-12);
                    prev = r;
                }
            }
        }
    }
}
