mod common;

use proptest::prelude::*;
use revpref::indices::{ccei, hmi, index_report, mci, mpi};
use revpref::relations::{direct_relations, transitive_closure};
use revpref::restrictions::{fosd_ccei, harp_efficiency, quasilinear_efficiency};
use revpref::{check_garp, make_dataset, ChoiceDataset};

fn rows_strategy(max_t: usize) -> impl Strategy<Value = common::Rows> {
    prop::collection::vec(
        (
            prop::collection::vec(1u8..=4, 2),
            prop::collection::vec(1u8..=4, 2),
        ),
        1..=max_t,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(p, x)| {
                (
                    p.into_iter().map(f64::from).collect(),
                    x.into_iter().map(f64::from).collect(),
                )
            })
            .collect()
    })
}

fn ds(rows: &common::Rows) -> ChoiceDataset {
    make_dataset(rows.clone()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn per_observation_price_scaling_keeps_relations(
        rows in rows_strategy(6),
        scales in prop::collection::vec(prop::sample::select(vec![0.5, 2.0, 4.0, 0.25]), 6),
        e in 0.0f64..=1.0,
    ) {
        let scaled: common::Rows = rows
            .iter()
            .zip(&scales)
            .map(|((p, x), s)| (p.iter().map(|v| v * s).collect(), x.clone()))
            .collect();
        let a = transitive_closure(direct_relations(&ds(&rows), e).unwrap());
        let b = transitive_closure(direct_relations(&ds(&scaled), e).unwrap());
        prop_assert_eq!(a.weak(), b.weak());
        prop_assert_eq!(a.strict(), b.strict());
        prop_assert_eq!(a.closure(), b.closure());
        prop_assert_eq!(ccei(&ds(&rows)), ccei(&ds(&scaled)));
        prop_assert_eq!(hmi(&ds(&rows)).unwrap(), hmi(&ds(&scaled)).unwrap());
    }

    #[test]
    fn common_unit_rescaling_keeps_relations(rows in rows_strategy(6), lambda in prop::sample::select(vec![0.5, 2.0, 8.0])) {
        // prices of good k scaled by λ and quantities of good k by 1/λ
        let scaled: common::Rows = rows
            .iter()
            .map(|(p, x)| (vec![p[0] * lambda, p[1]], vec![x[0] / lambda, x[1]]))
            .collect();
        let a = direct_relations(&ds(&rows), 1.0).unwrap();
        let b = direct_relations(&ds(&scaled), 1.0).unwrap();
        prop_assert_eq!(a.weak(), b.weak());
        prop_assert_eq!(a.strict(), b.strict());
    }

    #[test]
    fn relations_grow_with_efficiency(rows in rows_strategy(6), lo in 0.0f64..=1.0, hi in 0.0f64..=1.0) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let a = direct_relations(&ds(&rows), lo).unwrap();
        let b = direct_relations(&ds(&rows), hi).unwrap();
        prop_assert!(a.weak().is_subset_of(b.weak()));
        prop_assert!(a.strict().is_subset_of(b.strict()));
        if !check_garp(&ds(&rows), lo).unwrap().passes {
            prop_assert!(!check_garp(&ds(&rows), hi).unwrap().passes);
        }
    }

    #[test]
    fn closure_is_idempotent_and_ordered(rows in rows_strategy(6), e in 0.0f64..=1.0) {
        let once = transitive_closure(direct_relations(&ds(&rows), e).unwrap());
        let twice = transitive_closure(once.clone());
        prop_assert_eq!(once.closure(), twice.closure());
        prop_assert!(once.strict().is_subset_of(once.weak()));
        prop_assert!(once.weak().is_subset_of(once.closure().unwrap()));
    }

    #[test]
    fn subsets_are_at_least_as_efficient(rows in rows_strategy(6), mask in 1u32..64) {
        let keep: Vec<usize> = (0..rows.len()).filter(|i| mask >> i & 1 == 1).collect();
        prop_assume!(!keep.is_empty());
        let full = ds(&rows);
        prop_assert!(ccei(&full.subset(&keep)) >= ccei(&full));
    }

    #[test]
    fn indices_in_unit_interval_and_ordered(rows in rows_strategy(6)) {
        let d = ds(&rows);
        let r = index_report(&d).unwrap();
        for v in [r.ccei, r.hmi, r.mpi, r.mci] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(harp_efficiency(&d) <= r.ccei + 1e-9);
        prop_assert!(quasilinear_efficiency(&d) <= r.ccei + 1e-9);
        prop_assert!(fosd_ccei(&d).unwrap() <= r.ccei + 1e-9);
    }

    #[test]
    fn fosd_is_mirror_invariant(rows in rows_strategy(5)) {
        let mirrored: common::Rows = rows
            .iter()
            .map(|(p, x)| (vec![p[1], p[0]], vec![x[1], x[0]]))
            .collect();
        prop_assert_eq!(fosd_ccei(&ds(&rows)).unwrap(), fosd_ccei(&ds(&mirrored)).unwrap());
    }

    #[test]
    fn two_observation_garp_is_pairwise_check(rows in rows_strategy(2)) {
        prop_assume!(rows.len() == 2);
        let c = common::cross(&rows);
        let w01 = c[0][1] <= c[0][0] + 1e-9;
        let w10 = c[1][0] <= c[1][1] + 1e-9;
        let s01 = c[0][1] < c[0][0] - 1e-9;
        let s10 = c[1][0] < c[1][1] - 1e-9;
        let violates = w01 && w10 && (s01 || s10);
        prop_assert_eq!(check_garp(&ds(&rows), 1.0).unwrap().passes, !violates);
    }
}

#[test]
fn perfect_consistency_on_generic_data() {
    let mut rng = common::rng(21);
    for _ in 0..300 {
        let d = ds(&common::random_real_rows(&mut rng, 6));
        let garp = check_garp(&d, 1.0).unwrap().passes;
        assert_eq!(ccei(&d) == 1.0, garp);
        assert_eq!(hmi(&d).unwrap().value == 1.0, garp);
        assert_eq!(mpi(&d) == 0.0, garp);
        assert_eq!(mci(&d).value == 0.0, garp);
    }
}
