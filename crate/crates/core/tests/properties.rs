use bz_core::exp_sampler::{ExponentialGenerator, SpecGenerator};
use bz_core::ord_transform::{build_ordinary, Strategy as UStrategy};
use bz_core::rng::RandomSource;
use bz_core::spec::{load_spec, parse_spec};
use bz_core::special::chi2_sf;
use bz_core::stats::{chi_square_counts, Histogram};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("Z".to_string()),
        Just("1".to_string()),
        Just("A".to_string()),
        Just("B".to_string()),
        "[a-c]".prop_map(|c| format!("Z<{c}>")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(l, r)| format!("{l} + {r}")),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| format!("({l}) * ({r})")),
            (prop_oneof![Just("SEQ"), Just("SET"), Just("CYC")], 1u32..4, inner)
                .prop_map(|(k, m, e)| format!("{k}>={m}({e})")),
        ]
    })
}

proptest! {
    #[test]
    fn printed_specs_parse_back(a in expr(), b in expr()) {
        let parsed = parse_spec(&format!("A = {a}\nB = {b}\n")).unwrap();
        let printed = parsed.to_string();
        let again = parse_spec(&printed).unwrap();
        prop_assert_eq!(&parsed, &again);
        prop_assert_eq!(printed, again.to_string());
    }

    #[test]
    fn chi2_tail_matches_reference(stat in 0.0f64..400.0, dof in 1usize..120) {
        let reference = ChiSquared::new(dof as f64).unwrap().sf(stat);
        prop_assert!((chi2_sf(stat, dof) - reference).abs() < 1e-10, "{} vs {}", chi2_sf(stat, dof), reference);
    }

    #[test]
    fn chi_square_is_well_formed(counts in prop::collection::vec(0u64..500, 2..30), weights in prop::collection::vec(0.01f64..1.0, 30)) {
        let total: f64 = weights[..counts.len()].iter().sum();
        let law: Vec<f64> = weights[..counts.len()].iter().map(|w| w / total).collect();
        prop_assume!(counts.iter().sum::<u64>() > 0);
        if let Ok(r) = chi_square_counts(&counts, &law) {
            prop_assert!(r.statistic >= 0.0);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
            prop_assert_eq!(r.dof + 1, r.groups.len());
            let mut next = 0;
            for g in &r.groups {
                prop_assert_eq!(g[0], next);
                prop_assert!(g[1] >= g[0]);
                next = g[1] + 1;
            }
            prop_assert_eq!(next, counts.len());
        }
    }

    #[test]
    fn exact_expectations_give_zero_statistic(k in 2usize..12, scale in 10u64..1000) {
        let law = vec![1.0 / k as f64; k];
        let r = chi_square_counts(&vec![scale; k], &law).unwrap();
        prop_assert!(r.statistic.abs() < 1e-9);
        prop_assert!((r.p_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn histogram_merge_adds(a in prop::collection::vec(0usize..40, 0..200), b in prop::collection::vec(0usize..40, 0..200)) {
        let mut left = Histogram::new(16, 0, "a");
        left.extend(a.iter().copied());
        let mut right = Histogram::new(16, 0, "b");
        right.extend(b.iter().copied());
        let mut joint = Histogram::new(16, 0, "ab");
        joint.extend(a.iter().chain(&b).copied());
        left.merge(&right).unwrap();
        prop_assert_eq!(left.counts, joint.counts);
        prop_assert_eq!(left.total, joint.total);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ordinary_draws_replay_from_seed(seed in any::<u64>(), x in 0.05f64..0.9) {
        let spec = load_spec("A = SET(Z)").unwrap();
        let root = spec.resolve(None).unwrap();
        let g = SpecGenerator::new(spec, root);
        let run = |seed| {
            let mut s = build_ordinary(g.clone(), x, UStrategy::Mixture, RandomSource::new(seed)).unwrap();
            (0..50).map(|_| {
                let o = s.sample().unwrap();
                (SpecGenerator::object_size(&o.object), o.u.to_bits())
            }).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(seed), run(seed));
    }
}
