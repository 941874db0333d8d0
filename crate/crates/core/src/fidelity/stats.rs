//! Wilcoxon signed-rank and Fisher exact tests, two-sided.

use serde::{Deserialize, Serialize};

use super::FidelityError;

/// Largest sample size for which the Wilcoxon null distribution is
/// enumerated exactly.
pub const WILCOXON_EXACT_MAX_N: usize = 20;
pub const WILCOXON_MIN_PAIRS: usize = 5;

/// Average ranks (1-based) of `values`, ties sharing the mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k + 1;
        while end < order.len() && values[order[end]] == values[order[k]] {
            end += 1;
        }
        let rank = (k + 1 + end) as f64 / 2.0;
        for &i in &order[k..end] {
            ranks[i] = rank;
        }
        k = end;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences.
    pub w_plus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped and tied magnitudes get average ranks. Up
/// to [`WILCOXON_EXACT_MAX_N`] pairs the null distribution of `W+` is
/// counted exactly over all sign assignments; above that a normal
/// approximation with tie and continuity corrections is used. When every
/// difference is zero the samples agree perfectly and `p = 1`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, FidelityError> {
    if a.len() != b.len() {
        return Err(FidelityError::LengthMismatch(a.len(), b.len()));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 && !a.is_empty() {
        return Ok(WilcoxonResult {
            w_plus: 0.0,
            n: 0,
            p_value: 1.0,
            exact: true,
        });
    }
    if n < WILCOXON_MIN_PAIRS {
        return Err(FidelityError::TooFewPairs(n));
    }
    let mags: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&mags);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    if n <= WILCOXON_EXACT_MAX_N {
        // Ranks are multiples of 1/2; count subset sums of doubled ranks.
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0u64; total + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let w = (w_plus * 2.0).round() as usize;
        let all = (1u64 << n) as f64;
        let lower: u64 = counts[..=w].iter().sum();
        let upper: u64 = counts[w..].iter().sum();
        let p = (2.0 * lower.min(upper) as f64 / all).min(1.0);
        return Ok(WilcoxonResult {
            w_plus,
            n,
            p_value: p,
            exact: true,
        });
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = tie_groups(&mags).map(|t| t * t * t - t).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let p = libm::erfc(z / std::f64::consts::SQRT_2).min(1.0);
    Ok(WilcoxonResult {
        w_plus,
        n,
        p_value: p,
        exact: false,
    })
}

fn tie_groups(values: &[f64]) -> impl Iterator<Item = f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut k = 0;
    while k < v.len() {
        let end = k + v[k..].iter().take_while(|x| **x == v[k]).count();
        groups.push((end - k) as f64);
        k = end;
    }
    groups.into_iter()
}

/// Natural log of `k!` for every `k` up to `n`.
fn ln_factorials(n: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Two-sided Fisher exact test on `[[a, b], [c, d]]`.
///
/// Sums the hypergeometric probabilities of every table with the same
/// margins that is no more likely than the observed one. A zero row or
/// column margin leaves a single possible table and is reported as
/// [`FidelityError::DegenerateMargins`].
pub fn fisher_exact(table: [[u64; 2]; 2]) -> Result<f64, FidelityError> {
    let [[a, b], [c, d]] = table;
    let (r1, r2, c1, c2) = (a + b, c + d, a + c, b + d);
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return Err(FidelityError::DegenerateMargins);
    }
    let n = r1 + r2;
    let lf = ln_factorials(n);
    let ln_p = |x: u64| {
        let (b, c, d) = (r1 - x, c1 - x, r2 + x - c1);
        lf[r1 as usize] + lf[r2 as usize] + lf[c1 as usize] + lf[c2 as usize]
            - lf[n as usize]
            - lf[x as usize]
            - lf[b as usize]
            - lf[c as usize]
            - lf[d as usize]
    };
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let observed = ln_p(a);
    // Relative slack so tables equal to the observed one up to rounding count.
    let cutoff = observed + 1e-7;
    let p: f64 = (lo..=hi)
        .map(ln_p)
        .filter(|lp| *lp <= cutoff)
        .map(f64::exp)
        .sum();
    Ok(p.min(1.0))
}

/// Fisher test with the convention that a degenerate table gives `p = 1`.
/// The flag tells whether the convention was applied.
pub fn fisher_exact_or_one(table: [[u64; 2]; 2]) -> (f64, bool) {
    match fisher_exact(table) {
        Ok(p) => (p, false),
        Err(_) => (1.0, true),
    }
}
