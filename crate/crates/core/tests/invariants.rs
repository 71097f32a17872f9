use acnoise_core::config::RunConfig;
use acnoise_core::oracle::{cluster_partition, pairing_count};
use acnoise_core::propagate::cubic_flow_value;
use acnoise_core::stats::{Check, Estimate, Record, Rule};
use acnoise_core::{heat_propagate, EnsembleAccumulator, GridSpec, ScalarField};
use proptest::prelude::*;

fn grid() -> GridSpec {
    GridSpec::new(3, 8, 4.0).unwrap()
}

fn field() -> impl Strategy<Value = ScalarField> {
    prop::collection::vec(-3.0f64..3.0, 512).prop_map(|v| ScalarField::from_values(grid(), v, 0.0).unwrap())
}

fn l2(f: &ScalarField) -> f64 {
    f.values().iter().map(|v| v * v).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn heat_conserves_mass_and_contracts(f in field(), t in 0.0f64..2.0) {
        let g = heat_propagate(&f, t).unwrap();
        prop_assert!((g.integral() - f.integral()).abs() <= 1e-10 * (1.0 + f.integral().abs() + l2(&f)));
        prop_assert!(l2(&g) <= l2(&f) * (1.0 + 1e-12));
        prop_assert!(g.max() <= f.max() + 1e-9 && g.min() >= f.min() - 1e-9);
    }

    #[test]
    fn heat_is_a_semigroup(f in field(), s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let a = heat_propagate(&heat_propagate(&f, s).unwrap(), t).unwrap();
        let b = heat_propagate(&f, s + t).unwrap();
        prop_assert!(a.sub(&b).unwrap().max_abs() <= 1e-12 * (1.0 + l2(&f)));
    }

    #[test]
    fn cubic_flow_is_odd_shrinking_and_comes_down(u in -1e3f64..1e3, lambda in 0.0f64..50.0, t in 0.0f64..5.0) {
        let v = cubic_flow_value(u, lambda, t);
        prop_assert_eq!(cubic_flow_value(-u, lambda, t), -v);
        prop_assert!(v.abs() <= u.abs());
        prop_assert!(v * u >= 0.0);
        if lambda * t > 0.0 {
            prop_assert!(v * v <= 1.0 / (2.0 * lambda * t) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn cubic_flow_composes(u in -50.0f64..50.0, lambda in 0.0f64..10.0, s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let two = cubic_flow_value(cubic_flow_value(u, lambda, s), lambda, t);
        let one = cubic_flow_value(u, lambda, s + t);
        prop_assert!((two - one).abs() <= 1e-12 * u.abs().max(1.0));
    }

    #[test]
    fn merge_is_associative_and_commutative(
        xs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..200),
        cut1 in 0usize..200,
        cut2 in 0usize..200,
    ) {
        let n = xs.len();
        let (a, b) = ((cut1 % n).min(cut2 % n), (cut1 % n).max(cut2 % n));
        let part = |r: std::ops::Range<usize>| {
            let mut acc = EnsembleAccumulator::new(vec!["x".into(), "y".into()], vec![(0, 1)], 16).unwrap();
            for i in r {
                acc.push(i as u64, &Record { values: vec![xs[i].0, xs[i].1], noise_coeffs: vec![] }).unwrap();
            }
            acc
        };
        let (p, q, r) = (part(0..a), part(a..b), part(b..n));
        let mut left = p.clone();
        left.merge(&q).unwrap();
        left.merge(&r).unwrap();
        let mut qr = q.clone();
        qr.merge(&r).unwrap();
        let mut right = qr.clone();
        right.merge(&p).unwrap();
        let full = part(0..n);
        for acc in [&left, &right] {
            prop_assert_eq!(acc.count(), n as u64);
            for stat in [0usize, 1, 2] {
                let f = |m: &acnoise_core::stats::Moments| match stat {
                    0 => m.mean(0),
                    1 => m.raw(1, 4),
                    _ => m.raw_cross(0, 1),
                };
                let (x, y) = (acc.estimate(f).value, full.estimate(f).value);
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0));
            }
        }
    }

    #[test]
    fn pairing_counts_follow_the_recursion(k in 2u32..=12) {
        prop_assert_eq!(pairing_count(k).unwrap(), (2 * k as u64 - 1) * pairing_count(k - 1).unwrap());
    }

    #[test]
    fn clusters_partition_the_points(
        pts in prop::collection::vec(prop::collection::vec(0.0f64..4.0, 3), 1..20),
        cutoff in 0.0f64..2.0,
    ) {
        let blocks = cluster_partition(&pts, cutoff);
        let mut seen: Vec<usize> = blocks.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..pts.len()).collect::<Vec<_>>());
        let dist = |i: usize, j: usize| pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        for (bi, b) in blocks.iter().enumerate() {
            for c in &blocks[bi + 1..] {
                for &i in b {
                    for &j in c {
                        prop_assert!(dist(i, j) > cutoff);
                    }
                }
            }
        }
    }

    #[test]
    fn rules_accept_their_reference_exactly(value in -1e6f64..1e6, z in 0.0f64..6.0) {
        let exact = Estimate::exact(value);
        let pass = |rule: Rule| Check::new("rule", exact, rule).pass;
        let inclusive = [Rule::Near { target: value, z }, Rule::AtMost { bound: value, z }, Rule::AtLeast { bound: value, z }];
        prop_assert!(inclusive.into_iter().all(pass));
        let strict = Rule::Above { bound: value, z };
        prop_assert!(!pass(strict));
    }

    #[test]
    fn configs_round_trip(
        seed in 0..=i64::MAX as u64,
        replicas in 32u64..100_000,
        lambdas in prop::collection::vec(0.0f64..64.0, 1..5),
        t in 0.01f64..2.0,
    ) {
        let mut cfg = RunConfig::default();
        cfg.ensemble.seed = seed;
        cfg.ensemble.n_replicas = replicas;
        cfg.sim.lambda = lambdas;
        cfg.sim.t_list = vec![t];
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }
}
