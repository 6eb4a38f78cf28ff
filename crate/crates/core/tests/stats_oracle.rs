use proptest::prelude::*;
use vimp_core::stats::{
    chisq1_quantile, chisq_tail, chisq_test, empirical_quantile, pearson_corr, quantile_bins,
    ContingencyTable,
};

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn gamma_q_matches_closed_form_oracle_for_small_df() {
    let xs = [
        1e-4, 0.01, 0.1, 0.5, 1.0, 1.5, 2.0, 3.0, 3.841459, 5.0, 7.5, 10.0, 15.0, 20.0, 30.0, 45.0,
        60.0,
    ];
    for df in 1..=9u32 {
        for &x in &xs {
            let (p, ln_p) = chisq_tail(x, df).unwrap();
            let want = vimp_oracle::chisq_sf(x, df);
            assert!(rel_err(p, want) < 1e-10, "df {df} x {x}: {p} vs {want}");
            assert!(rel_err(ln_p.exp(), p) < 1e-12);
        }
    }
}

#[test]
fn published_table_values() {
    let (p, _) = chisq_tail(3.841459, 1).unwrap();
    assert!((p - 0.05).abs() < 1e-6);
    let (p, _) = chisq_tail(16.918978, 9).unwrap();
    assert!((p - 0.05).abs() < 1e-6);
    let t = ContingencyTable::from_rows(&[vec![10, 0], vec![0, 10]]).unwrap();
    let r = chisq_test(&t).unwrap();
    assert!((r.statistic - 20.0).abs() < 1e-12);
    assert_eq!(r.df, 1);
    assert!(rel_err(r.p_value, vimp_oracle::chisq_sf(20.0, 1)) < 1e-10);
}

#[test]
fn quantile_round_trip() {
    for p in [1.0, 0.9, 0.5, 0.1, 1e-3, 1e-8, 1e-30] {
        let q = chisq1_quantile(p, p.ln());
        let (back, _) = chisq_tail(q, 1).unwrap();
        assert!(rel_err(back, p) < 1e-6, "p {p}: q {q} -> {back}");
    }
}

#[test]
fn quantile_matches_inverse_normal_oracle() {
    for p in [0.9, 0.5, 0.05, 0.01, 1e-6, 1e-40] {
        let q = chisq1_quantile(p, p.ln());
        let want = vimp_oracle::chisq1_quantile(p);
        assert!(rel_err(q, want) < 1e-8, "p {p}: {q} vs {want}");
    }
    assert!((chisq1_quantile(0.5, 0.5f64.ln()) - 0.454936).abs() < 1e-5);
    assert!((chisq1_quantile(0.05, 0.05f64.ln()) - 3.841459).abs() < 1e-5);
}

#[test]
fn quantile_is_monotone() {
    let mut last = -1.0;
    let mut p: f64 = 1.0;
    while p > 1e-300 {
        let q = chisq1_quantile(p, p.ln());
        assert!(q >= last, "p {p}");
        last = q;
        p *= 0.7;
    }
}

#[test]
fn correlation_hand_value() {
    let r = pearson_corr(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
    assert!((r - 0.98198).abs() < 1e-5);
    assert!((r - vimp_oracle::pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0])).abs() < 1e-12);
}

fn table_strategy() -> impl Strategy<Value = Vec<Vec<u64>>> {
    (2usize..5, 2usize..5)
        .prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(0u64..30, c), r))
}

proptest! {
    #[test]
    fn chisq_test_ignores_row_and_column_order(rows in table_strategy(), rot_r in 0usize..4, rot_c in 0usize..4) {
        let total: u64 = rows.iter().flatten().sum();
        prop_assume!(total > 0);
        let a = chisq_test(&ContingencyTable::from_rows(&rows).unwrap()).unwrap();
        let mut shuffled = rows.clone();
        let nr = shuffled.len();
        shuffled.rotate_left(rot_r % nr);
        for row in &mut shuffled {
            let nc = row.len();
            row.rotate_left(rot_c % nc);
            row.reverse();
        }
        let b = chisq_test(&ContingencyTable::from_rows(&shuffled).unwrap()).unwrap();
        prop_assert_eq!(a.df, b.df);
        prop_assert!((a.statistic - b.statistic).abs() <= 1e-9 * a.statistic.max(1.0));
        prop_assert!((0.0..=1.0).contains(&a.p_value));
    }

    #[test]
    fn bins_cover_values_with_at_most_m_groups(
        values in prop::collection::vec(prop::option::weighted(0.9, -50i32..50), 1..80),
        m in 2usize..6,
    ) {
        let xs: Vec<Option<f64>> = values.iter().map(|v| v.map(f64::from)).collect();
        let bins = quantile_bins(&xs, m).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for (x, b) in xs.iter().zip(&bins) {
            prop_assert_eq!(x.is_some(), b.is_some());
            if let Some(b) = b {
                prop_assert!((1..=m).contains(b));
                seen.insert(*b);
            }
        }
        prop_assert!(seen.len() <= m);
        // Bins are monotone in the value.
        for (xa, ba) in xs.iter().zip(&bins) {
            for (xb, bb) in xs.iter().zip(&bins) {
                if let (Some(xa), Some(xb), Some(ba), Some(bb)) = (xa, xb, ba, bb) {
                    if xa < xb { prop_assert!(ba <= bb); }
                }
            }
        }
    }

    #[test]
    fn empirical_quantile_is_an_element(xs in prop::collection::vec(-1e6f64..1e6, 1..60), q in 0.0f64..=1.0) {
        let v = empirical_quantile(&xs, q).unwrap();
        prop_assert!(xs.contains(&v));
    }
}
