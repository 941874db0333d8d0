//! Brute-force reference implementations used to check the fast ones.
#![allow(dead_code)]

/// Best `(score, matches)` over every global alignment of `n` against `m`
/// positions, compared by score first.
///
/// An alignment is fixed by its aligned pairs `(i, j)`, strictly increasing
/// in both coordinates; every other position is a gap. Reordering adjacent
/// gaps does not change the score, so enumerating these pair sequences
/// covers all alignments.
pub fn exhaustive_alignment(
    n: usize,
    m: usize,
    is_match: &dyn Fn(usize, usize) -> bool,
    match_score: i64,
    mismatch_score: i64,
    gap_score: i64,
) -> (i64, usize) {
    fn go(
        i0: usize,
        j0: usize,
        n: usize,
        m: usize,
        pairs: usize,
        score: i64,
        matches: usize,
        ctx: &(&dyn Fn(usize, usize) -> bool, i64, i64, i64),
        best: &mut (i64, usize),
    ) {
        let (is_match, hit, miss, gap) = *ctx;
        let total = score + gap * (n + m - 2 * pairs) as i64;
        if (total, matches) > *best {
            *best = (total, matches);
        }
        for i in i0..n {
            for j in j0..m {
                let (s, k) = if is_match(i, j) { (hit, 1) } else { (miss, 0) };
                go(
                    i + 1,
                    j + 1,
                    n,
                    m,
                    pairs + 1,
                    score + s,
                    matches + k,
                    ctx,
                    best,
                );
            }
        }
    }
    let mut best = (i64::MIN, 0);
    go(
        0,
        0,
        n,
        m,
        0,
        0,
        0,
        &(is_match, match_score, mismatch_score, gap_score),
        &mut best,
    );
    best
}

/// Similarity in percent from the exhaustive alignment with scores
/// +1 / -1 / -1.
pub fn exhaustive_similarity(n: usize, m: usize, is_match: &dyn Fn(usize, usize) -> bool) -> f64 {
    let (_, matches) = exhaustive_alignment(n, m, is_match, 1, -1, -1);
    100.0 * 2.0 * matches as f64 / (n + m) as f64
}

/// Two-sided signed-rank p-value by enumerating all 2^n sign patterns.
/// Zero differences are dropped; tied magnitudes share average ranks.
pub fn wilcoxon_bruteforce(diffs: &[f64]) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
    let n = d.len();
    let ranks: Vec<f64> = d
        .iter()
        .map(|x| {
            let below = d.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(x, _)| **x > 0.0)
        .map(|(_, r)| r)
        .sum();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n)
            .filter(|k| mask >> k & 1 == 1)
            .map(|k| ranks[k])
            .sum();
        if w <= observed + 1e-9 {
            le += 1;
        }
        if w >= observed - 1e-9 {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
}

fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Two-sided Fisher p-value with exact integer hypergeometric weights.
pub fn fisher_bruteforce(table: [[u64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = table;
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let weight = |x: u64| binom(r1, x) * binom(r2, c1 - x);
    let observed = weight(a);
    let total: u128 = (0..=r1.min(c1)).filter(|&x| c1 - x <= r2).map(weight).sum();
    let extreme: u128 = (0..=r1.min(c1))
        .filter(|&x| c1 - x <= r2)
        .map(weight)
        .filter(|&w| w <= observed)
        .sum();
    extreme as f64 / total as f64
}
