//! Property suites over the core invariants.

use proptest::prelude::*;

use p2pfl::datasets::{partition_iid, synth_blobs, Dataset};
use p2pfl::federation::{fedavg, Role, RoundRecord};
use p2pfl::harness::{emit_client_table, format_sig6, parse_client_table};
use p2pfl::learner::{Layout, ParamVector};
use p2pfl::privacy::clip;

fn vector(values: Vec<f64>) -> ParamVector {
    let n = values.len();
    ParamVector::from_values(Layout::flat(n), values).expect("flat layout")
}

proptest! {
    #[test]
    fn clip_norm_bound_and_idempotence(
        values in proptest::collection::vec(-1e3f64..1e3, 1..64),
        clip_norm in 1e-3f64..1e3,
    ) {
        let u = vector(values);
        let clipped = clip(&u, clip_norm).unwrap();
        prop_assert!(clipped.l2_norm() <= clip_norm + 1e-9);
        let twice = clip(&clipped, clip_norm).unwrap();
        prop_assert_eq!(twice.values(), clipped.values());
        if u.l2_norm() <= clip_norm {
            prop_assert_eq!(clipped.values(), u.values());
        } else {
            // direction preserved: cross products vanish pairwise
            let lambda = clipped.l2_norm() / u.l2_norm();
            for (c, v) in clipped.values().iter().zip(u.values()) {
                prop_assert!((c - lambda * v).abs() <= 1e-9 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn fedavg_permutation_and_scale_invariance(
        a in proptest::collection::vec(-10f64..10.0, 4),
        b in proptest::collection::vec(-10f64..10.0, 4),
        c in proptest::collection::vec(-10f64..10.0, 4),
        sizes in proptest::collection::vec(1usize..1000, 3),
        scale in 1usize..50,
    ) {
        let (va, vb, vc) = (vector(a), vector(b), vector(c));
        let fwd = fedavg(&[(&va, sizes[0]), (&vb, sizes[1]), (&vc, sizes[2])]).unwrap();
        let rev = fedavg(&[(&vc, sizes[2]), (&va, sizes[0]), (&vb, sizes[1])]).unwrap();
        for (x, y) in fwd.values().iter().zip(rev.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        let scaled = fedavg(&[
            (&va, sizes[0] * scale),
            (&vb, sizes[1] * scale),
            (&vc, sizes[2] * scale),
        ])
        .unwrap();
        for (x, y) in fwd.values().iter().zip(scaled.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        // coordinatewise convex hull
        for ((&x, &p), (&q, &r)) in fwd
            .values()
            .iter()
            .zip(va.values())
            .zip(vb.values().iter().zip(vc.values()))
        {
            let lo = p.min(q).min(r);
            let hi = p.max(q).max(r);
            prop_assert!(x >= lo - 1e-12 && x <= hi + 1e-12);
        }
    }

    #[test]
    fn partition_is_disjoint_and_complete(
        n in 1usize..500,
        k in 1usize..20,
        seed in any::<u64>(),
    ) {
        prop_assume!(k <= n);
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let data = Dataset::new("p".into(), vec![0.0; n], 1, labels, 2).unwrap();
        let partition = partition_iid(&data, k, seed).unwrap();
        let mut seen = vec![false; n];
        for shard in partition.shards() {
            for &i in shard {
                prop_assert!(!seen[i], "index {} dealt twice", i);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        let sizes: Vec<usize> = partition.shards().iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn dataset_csv_round_trips(
        n in 4usize..40,
        dims in 1usize..6,
        classes in 2usize..5,
        seed in any::<u64>(),
    ) {
        prop_assume!(n >= classes);
        let data = synth_blobs(n, dims, classes, seed).unwrap();
        let mut buf = Vec::new();
        data.to_csv(&mut buf).unwrap();
        let back = Dataset::from_csv(&String::from_utf8(buf).unwrap(), data.name()).unwrap();
        prop_assert_eq!(back.len(), data.len());
        prop_assert_eq!(back.feature_dim(), data.feature_dim());
        prop_assert_eq!(back.classes(), data.classes());
        for i in 0..data.len() {
            prop_assert_eq!(data.row(i), back.row(i));
            prop_assert_eq!(data.label(i), back.label(i));
        }
    }

    #[test]
    fn format_sig6_keeps_six_digits(x in -1e6f64..1e6) {
        let printed = format_sig6(x);
        let parsed: f64 = printed.parse().unwrap();
        // six significant digits: relative error at most 5e-6
        prop_assert!((parsed - x).abs() <= 5e-6 * x.abs().max(1e-12) + 1e-12);
    }

    #[test]
    fn client_table_emit_parse_emit_is_stable(
        rounds in 1usize..4,
        nodes in 1usize..6,
        losses in proptest::collection::vec(0f64..10.0, 24),
        dnp_mask in proptest::collection::vec(any::<bool>(), 24),
    ) {
        let mut records = Vec::new();
        for round in 0..rounds {
            for node in 0..nodes {
                let i = round * nodes + node;
                let dnp = dnp_mask[i % dnp_mask.len()] && node != 0;
                records.push(RoundRecord {
                    round,
                    node,
                    role: if node == 0 {
                        Role::Aggregator
                    } else if dnp {
                        Role::Dnp
                    } else {
                        Role::Provider
                    },
                    loss: (!dnp).then_some(losses[i % losses.len()]),
                    accuracy: (!dnp).then_some(0.5),
                    epsilon: if node % 2 == 0 { f64::INFINITY } else { 1.25 },
                });
            }
        }
        let mut first = Vec::new();
        emit_client_table(&records, &mut first).unwrap();
        let text = String::from_utf8(first).unwrap();
        let rows = parse_client_table(&text, "prop").unwrap();
        let reparsed: Vec<RoundRecord> = rows
            .iter()
            .map(|r| RoundRecord {
                round: r.round,
                node: r.node,
                role: r.role,
                loss: r.loss,
                accuracy: r.accuracy,
                epsilon: r.epsilon.unwrap_or(f64::INFINITY),
            })
            .collect();
        let mut second = Vec::new();
        emit_client_table(&reparsed, &mut second).unwrap();
        prop_assert_eq!(text, String::from_utf8(second).unwrap());
    }

    #[test]
    fn config_parser_never_panics(text in "\\PC{0,300}") {
        let _ = p2pfl::harness::parse_config(&text);
    }
}
