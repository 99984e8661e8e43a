use proptest::prelude::*;
use refertriage::stats::{
    average_ranks, benjamini_hochberg, two_proportion_test, wilcoxon_signed_rank, WilcoxonMethod,
};

/// Two-sided p from enumerating every sign assignment over the ranks of the
/// nonzero differences.
fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let ranks = average_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let observed: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let m = d.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u32..(1 << m) {
        let w: f64 = (0..m)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if w <= observed + 1e-9 {
            le += 1;
        }
        if w >= observed - 1e-9 {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / f64::from(1u32 << m)).min(1.0)
}

fn naive_bh(p: &[f64]) -> Vec<f64> {
    let m = p.len() as f64;
    p.iter()
        .map(|&pi| {
            p.iter()
                .filter(|&&pj| pj >= pi)
                .map(|&pj| {
                    let rank = p.iter().filter(|&&pk| pk <= pj).count() as f64;
                    pj * m / rank
                })
                .fold(1.0f64, f64::min)
        })
        .collect()
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Two-sided Fisher exact test on a 2x2 table: sum of probabilities of all
/// tables with the same margins that are no more likely than the observed.
fn fisher_exact(k1: u64, n1: u64, k2: u64, n2: u64) -> f64 {
    let k = k1 + k2;
    let n = n1 + n2;
    let lp = |a: u64| {
        ln_factorial(n1) - ln_factorial(a) - ln_factorial(n1 - a) + ln_factorial(n2)
            - ln_factorial(k - a)
            - ln_factorial(n2 - (k - a))
            - (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k))
    };
    let observed = lp(k1);
    let lo = k.saturating_sub(n2);
    let hi = k.min(n1);
    (lo..=hi)
        .map(lp)
        .filter(|&l| l <= observed + 1e-7)
        .map(f64::exp)
        .sum::<f64>()
        .min(1.0)
}

#[test]
fn five_fold_attainable_p_values() {
    // every sign pattern of five distinct magnitudes
    let mags = [0.01, 0.02, 0.03, 0.04, 0.05];
    let mut attained = std::collections::BTreeSet::new();
    for mask in 0u32..32 {
        let a: Vec<f64> = (0..5)
            .map(|i| {
                if mask >> i & 1 == 1 {
                    mags[i]
                } else {
                    -mags[i]
                }
            })
            .collect();
        let b = vec![0.0; 5];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.method, WilcoxonMethod::Exact);
        assert!((r.p_value - enumerated_p(&a, &b)).abs() < 1e-15);
        attained.insert((r.p_value * 32.0).round() as u64);
    }
    assert_eq!(*attained.iter().next().unwrap(), 2);
}

#[test]
fn fisher_agrees_on_large_gap() {
    let z = two_proportion_test(5, 100, 50, 100).unwrap();
    let f = fisher_exact(5, 100, 50, 100);
    assert!(z.p_value < 1e-3 && f < 1e-3, "z {} fisher {f}", z.p_value);
    let eq = fisher_exact(30, 100, 30, 100);
    assert!((eq - 1.0).abs() < 1e-9);
}

#[test]
fn referral_rates_differ_significantly() {
    // 235 of 2086 against 60.1% at the same size
    let t = two_proportion_test(235, 2086, 1254, 2086).unwrap();
    assert!(t.p_value < 1e-3);
}

proptest! {
    #[test]
    fn exact_branch_matches_enumeration(
        a in prop::collection::vec(-4i32..5, 1..12),
        b in prop::collection::vec(-4i32..5, 12),
    ) {
        let a: Vec<f64> = a.iter().map(|&v| f64::from(v) * 0.25).collect();
        let b: Vec<f64> = b[..a.len()].iter().map(|&v| f64::from(v) * 0.25).collect();
        prop_assume!(a.iter().zip(&b).any(|(x, y)| x != y));
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        prop_assert!((r.p_value - enumerated_p(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_scale_invariant(
        a in prop::collection::vec(0.0f64..1.0, 1..40),
        b in prop::collection::vec(0.0f64..1.0, 40),
        c in 0.01f64..100.0,
    ) {
        let b = &b[..a.len()];
        prop_assume!(a.iter().zip(b).any(|(x, y)| x != y));
        let p = wilcoxon_signed_rank(&a, b).unwrap().p_value;
        let sa: Vec<f64> = a.iter().map(|v| v * c).collect();
        let sb: Vec<f64> = b.iter().map(|v| v * c).collect();
        let q = wilcoxon_signed_rank(&sa, &sb).unwrap().p_value;
        prop_assert!((p - q).abs() < 1e-12);
    }

    #[test]
    fn bh_matches_naive(p in prop::collection::vec(0.0f64..=1.0, 0..40)) {
        let q = benjamini_hochberg(&p).unwrap();
        let oracle = naive_bh(&p);
        for i in 0..p.len() {
            prop_assert!((q[i] - oracle[i]).abs() < 1e-12);
            prop_assert!(q[i] >= p[i] && q[i] <= 1.0);
            for j in 0..p.len() {
                if p[i] <= p[j] {
                    prop_assert!(q[i] <= q[j]);
                }
            }
        }
    }

    #[test]
    fn proportion_test_symmetric(n1 in 1u64..500, n2 in 1u64..500, f1 in 0.0f64..=1.0, f2 in 0.0f64..=1.0) {
        let k1 = (f1 * n1 as f64) as u64;
        let k2 = (f2 * n2 as f64) as u64;
        let ab = two_proportion_test(k1, n1, k2, n2).unwrap();
        let ba = two_proportion_test(k2, n2, k1, n1).unwrap();
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }
}
