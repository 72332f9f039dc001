mod common;

use common::random_typed_graph;
use heterseed::graph::{load_graph, save_graph, HetGraph, Labels};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_then_load_is_identity(seed in 0u64..1_000_000, classes in 1usize..5, unlabeled in 0usize..3) {
        let mut parts = random_typed_graph(seed, classes).into_parts();
        let n = parts.node_counts[0];
        if let Labels::Single(y) = &mut parts.labels {
            for v in y.iter_mut().take(unlabeled.min(n)) {
                *v = None;
            }
        }
        parts.splits.train = (0..n).filter(|v| v % 3 == 0).collect();
        parts.splits.val = (0..n).filter(|v| v % 3 == 1).collect();
        parts.splits.test = (0..n).filter(|v| v % 3 == 2).collect();
        let g = HetGraph::new(parts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_graph(&g, dir.path()).unwrap();
        let back = load_graph(dir.path()).unwrap();
        prop_assert_eq!(back.parts(), g.parts());
    }
}
