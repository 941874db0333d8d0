use proptest::prelude::*;

use super::*;

#[path = "../../tests/support/oracles.rs"]
mod oracles;

fn cfg() -> AlignmentConfig {
    AlignmentConfig::default()
}

#[test]
fn identical_categorical() {
    let a = [200u16, 503, 200, 200, 503];
    assert_eq!(similarity_categorical(&a, &a, &cfg()).unwrap(), 100.0);
}

#[test]
fn numeric_within_tolerance() {
    let a = [2_000.0, 2_500.0, 3_000.0];
    let b = [2_400.0, 2_900.0, 3_400.0];
    assert_eq!(similarity_numeric(&a, &b, &cfg()).unwrap(), 100.0);
}

#[test]
fn single_flip() {
    let a = [200u16, 200, 503, 200];
    let b = [200u16, 200, 200, 200];
    assert_eq!(similarity_categorical(&a, &b, &cfg()).unwrap(), 75.0);
    assert_eq!(
        oracles::exhaustive_similarity(4, 4, &|i, j| a[i] == b[j]),
        75.0
    );
}

#[test]
fn empty_and_mixed_channels() {
    let e: [u16; 0] = [];
    assert_eq!(
        similarity_categorical(&e, &[200u16], &cfg()),
        Err(FidelityError::EmptyTrace)
    );
    let x = [1.0];
    let y = [200u16];
    assert_eq!(
        align_similarity(Channel::Numeric(&x), Channel::Categorical(&y), &cfg()),
        Err(FidelityError::MixedChannels)
    );
    assert_eq!(
        align_similarity(Channel::Numeric(&x), Channel::Numeric(&x), &cfg()),
        Ok(100.0)
    );
    let bad = AlignmentConfig {
        match_score: -1,
        ..cfg()
    };
    assert!(similarity_numeric(&x, &x, &bad).is_err());
    let bad = AlignmentConfig {
        tolerance_ms: -1.0,
        ..cfg()
    };
    assert!(similarity_numeric(&x, &x, &bad).is_err());
}

#[test]
fn unequal_lengths_use_mean_length() {
    // Three matches, one extra element: 2*3 / 7.
    let a = [200u16, 200, 200];
    let b = [200u16, 503, 200, 200];
    let s = similarity_categorical(&a, &b, &cfg()).unwrap();
    assert!((s - 600.0 / 7.0).abs() < 1e-12);
}

#[test]
fn wilcoxon_identical_samples() {
    let a = [1.0, 2.0, 3.0];
    let r = wilcoxon_signed_rank(&a, &a).unwrap();
    assert_eq!(r.p_value, 1.0);
}

#[test]
fn wilcoxon_small_example() {
    let d = [1.0, 2.0, 3.0, 4.0, 5.0, -6.0];
    let zeros = [0.0; 6];
    let r = wilcoxon_signed_rank(&d, &zeros).unwrap();
    assert_eq!(r.w_plus, 15.0);
    assert!(r.exact);
    let oracle = oracles::wilcoxon_bruteforce(&d);
    assert!((r.p_value - oracle).abs() < 1e-12);
    // W+ <= 15 happens in 54 of 64 patterns, W+ >= 15 in 14.
    assert!((r.p_value - 28.0 / 64.0).abs() < 1e-12);
}

#[test]
fn wilcoxon_errors() {
    assert_eq!(
        wilcoxon_signed_rank(&[1.0, 2.0], &[1.0]).unwrap_err(),
        FidelityError::LengthMismatch(2, 1)
    );
    assert_eq!(
        wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4]).unwrap_err(),
        FidelityError::TooFewPairs(4)
    );
}

#[test]
fn wilcoxon_normal_regime() {
    // Symmetric differences: no evidence of a shift.
    let d: Vec<f64> = (1..=60)
        .map(|k| if k % 2 == 0 { k as f64 } else { -(k as f64) })
        .collect();
    let zeros = vec![0.0; d.len()];
    let r = wilcoxon_signed_rank(&d, &zeros).unwrap();
    assert!(!r.exact);
    assert!(r.p_value > 0.5);
    // All positive: overwhelming evidence.
    let pos: Vec<f64> = (1..=60).map(|k| k as f64).collect();
    assert!(wilcoxon_signed_rank(&pos, &zeros).unwrap().p_value < 1e-9);
}

#[test]
fn wilcoxon_normal_close_to_exact_at_boundary() {
    // At n = 20 both methods are available; they should roughly agree.
    let d: Vec<f64> = (1..=20)
        .map(|k| if k % 3 == 0 { -(k as f64) } else { k as f64 })
        .collect();
    let exact = oracles::wilcoxon_bruteforce(&d);
    let mut longer = d.clone();
    longer.push(21.0);
    let zeros = vec![0.0; 21];
    let approx = wilcoxon_signed_rank(&longer, &zeros).unwrap();
    assert!(!approx.exact);
    assert!(
        (approx.p_value - exact).abs() < 0.1,
        "{} vs {exact}",
        approx.p_value
    );
}

#[test]
fn fisher_examples() {
    assert!((fisher_exact([[10, 10], [10, 10]]).unwrap() - 1.0).abs() < 1e-12);
    let p = fisher_exact([[1, 9], [11, 3]]).unwrap();
    assert!((p - 0.002_759_6).abs() < 1e-6, "{p}");
    assert!((p - oracles::fisher_bruteforce([[1, 9], [11, 3]])).abs() < 1e-12);
    assert_eq!(
        fisher_exact([[0, 0], [3, 4]]),
        Err(FidelityError::DegenerateMargins)
    );
    assert_eq!(fisher_exact_or_one([[5, 0], [7, 0]]), (1.0, true));
}

#[test]
fn mean_and_std() {
    assert_eq!(mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).0, 5.0);
    assert!((mean_std(&[1.0, 2.0, 3.0]).1 - 1.0).abs() < 1e-12);
    assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
}

fn status() -> impl Strategy<Value = u16> {
    prop_oneof![Just(200u16), Just(503u16), Just(404u16)]
}

proptest! {
    #[test]
    fn dp_equals_exhaustive_small(a in prop::collection::vec(status(), 1..=7), b in prop::collection::vec(status(), 1..=7)) {
        let dp = align(a.len(), b.len(), &cfg(), |i, j| a[i] == b[j]);
        let ex = oracles::exhaustive_alignment(a.len(), b.len(), &|i, j| a[i] == b[j], 1, -1, -1);
        prop_assert_eq!((dp.score, dp.matches), ex);
    }

    #[test]
    fn symmetric(a in prop::collection::vec(status(), 1..40), b in prop::collection::vec(status(), 1..40)) {
        let x = similarity_categorical(&a, &b, &cfg()).unwrap();
        let y = similarity_categorical(&b, &a, &cfg()).unwrap();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn bounded_and_full_iff_identical(a in prop::collection::vec(status(), 1..30), b in prop::collection::vec(status(), 1..30)) {
        let s = similarity_categorical(&a, &b, &cfg()).unwrap();
        prop_assert!((0.0..=100.0).contains(&s));
        prop_assert_eq!(s == 100.0, a == b);
    }

    #[test]
    fn replacing_matches_degrades_exactly(
        a in prop::collection::vec(2_400.0f64..3_000.0, 1..=20),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 0..=20),
    ) {
        let n = a.len();
        let mut idx: Vec<usize> = picks.iter().map(|p| p.index(n)).collect();
        idx.sort();
        idx.dedup();
        let mut b = a.clone();
        for &i in &idx {
            // Far from every element of `a`.
            b[i] = 100_000.0 + i as f64 * 10_000.0;
        }
        let before = similarity_numeric(&a, &a, &cfg()).unwrap();
        let after = similarity_numeric(&a, &b, &cfg()).unwrap();
        prop_assert!(after <= before);
        prop_assert!((before - after - 100.0 * idx.len() as f64 / n as f64).abs() < 1e-9);
        let oracle = oracles::exhaustive_similarity(n.min(8), n.min(8), &|i, j| (a[i] - b[j]).abs() <= 1_000.0);
        let dp = similarity_numeric(&a[..n.min(8)], &b[..n.min(8)], &cfg()).unwrap();
        prop_assert!((oracle - dp).abs() < 1e-9);
    }

    #[test]
    fn wilcoxon_exact_matches_enumeration(d in prop::collection::vec(prop_oneof![-4i32..=4, -50i32..=50], 5..=12)) {
        let diffs: Vec<f64> = d.iter().map(|x| *x as f64).collect();
        let zeros = vec![0.0; diffs.len()];
        match wilcoxon_signed_rank(&diffs, &zeros) {
            Ok(r) => prop_assert!((r.p_value - oracles::wilcoxon_bruteforce(&diffs)).abs() < 1e-12),
            Err(FidelityError::TooFewPairs(n)) => prop_assert!(n < 5),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn fisher_matches_enumeration(a in 0u64..=6, b in 0u64..=6, c in 0u64..=6, d in 0u64..=6) {
        match fisher_exact([[a, b], [c, d]]) {
            Ok(p) => prop_assert!((p - oracles::fisher_bruteforce([[a, b], [c, d]])).abs() < 1e-12),
            Err(FidelityError::DegenerateMargins) => prop_assert!(a + b == 0 || c + d == 0 || a + c == 0 || b + d == 0),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}
