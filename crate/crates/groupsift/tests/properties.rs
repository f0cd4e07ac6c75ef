//! Randomized property tests over the core invariants.

use proptest::prelude::*;

use groupsift::bipartite::{GraphBuilder, ObjectId, UserId};
use groupsift::eval::auc;
use groupsift::osg::{brute_force_osg, build_osg, OsgOptions};

fn graph_strategy() -> impl Strategy<Value = (Vec<(u8, u8)>, u8)> {
    (
        prop::collection::vec((0u8..40, 0u8..25), 1..300),
        0u8..4, // labeled-user stride, 0 = unlabeled
    )
}

proptest! {
    /// The key-value pair counting construction and the quadratic
    /// set-intersection construction agree exactly: same edges, same
    /// counts, bit-identical scores.
    #[test]
    fn osg_matches_brute_force((edges, label_stride) in graph_strategy()) {
        let mut b = GraphBuilder::new(0);
        for &(u, m) in &edges {
            b.add_edge(&format!("u{u}"), &format!("m{m}"), &[]);
        }
        let mut graph = b.build();
        if label_stride > 0 {
            let labeled: Vec<UserId> = (0..graph.num_users() as u32)
                .filter(|u| u % label_stride as u32 == 0)
                .map(UserId)
                .collect();
            graph.set_labeled_users(labeled);
        }
        let fast = build_osg(&graph, &OsgOptions::default()).unwrap();
        let slow = brute_force_osg(&graph).unwrap();
        prop_assert_eq!(fast.num_edges(), slow.num_edges());
        for (x, y) in fast.edges().iter().zip(slow.edges()) {
            prop_assert_eq!((x.a, x.b, x.overlap, x.labeled_overlap),
                            (y.a, y.b, y.overlap, y.labeled_overlap));
            prop_assert_eq!(x.s.to_bits(), y.s.to_bits());
            prop_assert_eq!(x.c.to_bits(), y.c.to_bits());
        }
    }

    /// Similarity weights respect the Jaccard bounds, symmetry holds via
    /// lookup in either direction, and overlap never exceeds the smaller
    /// in-degree.
    #[test]
    fn osg_bounds_and_symmetry((edges, _) in graph_strategy()) {
        let mut b = GraphBuilder::new(0);
        for &(u, m) in &edges {
            b.add_edge(&format!("u{u}"), &format!("m{m}"), &[]);
        }
        let graph = b.build();
        let osg = build_osg(&graph, &OsgOptions::default()).unwrap();
        for e in osg.edges() {
            prop_assert!(e.s > 0.0 && e.s <= 1.0);
            prop_assert!(e.overlap >= 1);
            let cap = graph.in_degree(e.a).min(graph.in_degree(e.b));
            prop_assert!(e.overlap <= cap);
            // s = 1 iff the incoming sets coincide, i.e. the overlap
            // saturates both degrees.
            let identical =
                e.overlap == graph.in_degree(e.a) && e.overlap == graph.in_degree(e.b);
            prop_assert_eq!(e.s == 1.0, identical);
            let fwd = osg.edge_between(e.a, e.b).unwrap();
            let rev = osg.edge_between(e.b, e.a).unwrap();
            prop_assert_eq!(fwd.c.to_bits(), rev.c.to_bits());
        }
    }

    /// Permuting input rows leaves the key-level graph unchanged: every
    /// object keeps the same incoming (user-name) multiplicity-free set.
    #[test]
    fn ingestion_is_row_order_independent(
        (edges, _) in graph_strategy(),
        seed in 0u64..1000,
    ) {
        let mut b = GraphBuilder::new(0);
        for &(u, m) in &edges {
            b.add_edge(&format!("u{u}"), &format!("m{m}"), &[]);
        }
        let a = b.build();

        let mut shuffled = edges.clone();
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let mut b = GraphBuilder::new(0);
        for &(u, m) in &shuffled {
            b.add_edge(&format!("u{u}"), &format!("m{m}"), &[]);
        }
        let c = b.build();

        prop_assert_eq!(a.num_edges(), c.num_edges());
        for o in 0..a.num_objects() as u32 {
            let name = a.object_name(ObjectId(o));
            let oc = c.object_id(name).unwrap();
            let mut ua: Vec<&str> = a
                .object_users(ObjectId(o))
                .iter()
                .map(|&u| a.user_name(UserId(u)))
                .collect();
            let mut uc: Vec<&str> = c
                .object_users(oc)
                .iter()
                .map(|&u| c.user_name(UserId(u)))
                .collect();
            ua.sort_unstable();
            uc.sort_unstable();
            prop_assert_eq!(ua, uc);
        }
    }

    /// The rank-sum AUC equals direct positive-negative pair comparison
    /// with half credit for ties.
    #[test]
    fn auc_matches_pair_oracle(
        scores in prop::collection::vec(0u8..6, 2..120),
        flip in 0u8..5,
    ) {
        let values: Vec<f64> = scores.iter().map(|&s| s as f64 / 3.0).collect();
        let truth: Vec<bool> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| (s as usize + i) % (flip as usize + 2) == 0)
            .collect();
        let pos = truth.iter().filter(|&&t| t).count();
        prop_assume!(pos > 0 && pos < truth.len());

        let fast = auc(&values, &truth).unwrap();
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..values.len() {
            if !truth[i] { continue; }
            for j in 0..values.len() {
                if truth[j] { continue; }
                pairs += 1.0;
                if values[i] > values[j] {
                    wins += 1.0;
                } else if values[i] == values[j] {
                    wins += 0.5;
                }
            }
        }
        prop_assert!((fast - wins / pairs).abs() < 1e-12);
    }
}
