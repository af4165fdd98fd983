use rand::Rng;

use super::{PivotStrategy, ProxyScores};
use crate::domain::Document;
use crate::error::{ListkError, Result};

/// Chooses `p` pivots among `candidates` and returns their indices, ascending.
///
/// With `k = Some(_)` pivots are for selection: the proxy strategy takes the
/// candidates at proxy ranks `k ..= k + p - 1` (shifted down if that runs past
/// the end). With `k = None` they are for sorting: the proxy strategy takes
/// proxy ranks `floor(i * (n + 1) / (p + 1))` for `i = 1..=p`, splitting the
/// candidates evenly. The random strategy samples uniformly without
/// replacement and ignores `k`.
pub fn select_pivots<R: Rng + ?Sized>(
    candidates: &[&Document],
    p: usize,
    strategy: PivotStrategy,
    k: Option<usize>,
    proxy: Option<&ProxyScores>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = candidates.len();
    if p == 0 || p >= n {
        return Err(ListkError::invalid(format!(
            "need 1 <= P < candidates, got P = {p} with {n} candidates"
        )));
    }
    let mut picked = match strategy {
        PivotStrategy::Random => rand::seq::index::sample(rng, n, p).into_vec(),
        PivotStrategy::Proxy => {
            let proxy = proxy
                .ok_or_else(|| ListkError::invalid("proxy pivot strategy needs proxy scores"))?;
            let by_proxy = proxy.rank_indices(candidates)?;
            // 1-based proxy ranks.
            let ranks: Vec<usize> = match k {
                Some(k) => {
                    let first = k.max(1).min(n - p + 1);
                    (first..first + p).collect()
                }
                None => (1..=p).map(|i| i * (n + 1) / (p + 1)).collect(),
            };
            ranks.into_iter().map(|r| by_proxy[r - 1]).collect()
        }
    };
    picked.sort_unstable();
    Ok(picked)
}
