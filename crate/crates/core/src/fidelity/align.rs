//! Global alignment similarity between two traces.

use serde::{Deserialize, Serialize};

use super::FidelityError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentConfig {
    /// Numeric elements match when they differ by at most this much.
    pub tolerance_ms: f64,
    pub match_score: i64,
    pub mismatch_score: i64,
    pub gap_score: i64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            tolerance_ms: 1_000.0,
            match_score: 1,
            mismatch_score: -1,
            gap_score: -1,
        }
    }
}

impl AlignmentConfig {
    pub fn check(&self) -> Result<(), FidelityError> {
        if !(self.tolerance_ms >= 0.0) {
            return Err(FidelityError::InvalidConfig(format!(
                "tolerance must be >= 0, got {}",
                self.tolerance_ms
            )));
        }
        if self.match_score <= self.mismatch_score {
            return Err(FidelityError::InvalidConfig(
                "match score must exceed mismatch score".into(),
            ));
        }
        Ok(())
    }
}

/// Best alignment found: its score and how many aligned pairs match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub score: i64,
    pub matches: usize,
}

impl Alignment {
    /// Matched positions over the mean length, in percent.
    pub fn similarity_pct(&self, len_a: usize, len_b: usize) -> f64 {
        100.0 * 2.0 * self.matches as f64 / (len_a + len_b) as f64
    }
}

// Score and match count packed into one integer so that a single max
// compares by score first and match count second.
const PACK: i64 = 1 << 24;

/// Needleman-Wunsch over `n` x `m` positions with `is_match(i, j)` deciding
/// whether `a[i]` and `b[j]` match. Among the alignments with the best score
/// the one with the most matches is reported.
pub fn align(
    n: usize,
    m: usize,
    cfg: &AlignmentConfig,
    is_match: impl Fn(usize, usize) -> bool,
) -> Alignment {
    assert!(n.max(m) < PACK as usize, "trace too long for alignment");
    let gap = cfg.gap_score * PACK;
    let hit = cfg.match_score * PACK + 1;
    let miss = cfg.mismatch_score * PACK;
    let mut prev: Vec<i64> = (0..=m as i64).map(|j| j * gap).collect();
    let mut cur = vec![0i64; m + 1];
    for i in 1..=n {
        cur[0] = i as i64 * gap;
        for j in 1..=m {
            let diag = prev[j - 1] + if is_match(i - 1, j - 1) { hit } else { miss };
            cur[j] = diag.max(prev[j] + gap).max(cur[j - 1] + gap);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let packed = prev[m];
    let score = packed.div_euclid(PACK);
    Alignment {
        score,
        matches: packed.rem_euclid(PACK) as usize,
    }
}

fn check_inputs(n: usize, m: usize, cfg: &AlignmentConfig) -> Result<(), FidelityError> {
    cfg.check()?;
    if n == 0 || m == 0 {
        return Err(FidelityError::EmptyTrace);
    }
    Ok(())
}

/// Similarity of two numeric channels; elements match within the tolerance.
pub fn similarity_numeric(
    a: &[f64],
    b: &[f64],
    cfg: &AlignmentConfig,
) -> Result<f64, FidelityError> {
    check_inputs(a.len(), b.len(), cfg)?;
    let tol = cfg.tolerance_ms;
    Ok(
        align(a.len(), b.len(), cfg, |i, j| (a[i] - b[j]).abs() <= tol)
            .similarity_pct(a.len(), b.len()),
    )
}

/// Similarity of two categorical channels; elements match when equal.
pub fn similarity_categorical<T: PartialEq>(
    a: &[T],
    b: &[T],
    cfg: &AlignmentConfig,
) -> Result<f64, FidelityError> {
    check_inputs(a.len(), b.len(), cfg)?;
    Ok(align(a.len(), b.len(), cfg, |i, j| a[i] == b[j]).similarity_pct(a.len(), b.len()))
}

/// One trace channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Channel<'a> {
    Numeric(&'a [f64]),
    Categorical(&'a [u16]),
}

/// Similarity of two channels of the same kind.
pub fn align_similarity(
    a: Channel<'_>,
    b: Channel<'_>,
    cfg: &AlignmentConfig,
) -> Result<f64, FidelityError> {
    match (a, b) {
        (Channel::Numeric(x), Channel::Numeric(y)) => similarity_numeric(x, y, cfg),
        (Channel::Categorical(x), Channel::Categorical(y)) => similarity_categorical(x, y, cfg),
        _ => Err(FidelityError::MixedChannels),
    }
}
