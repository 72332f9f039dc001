#![allow(dead_code)]

use heterseed::graph::{FeatureMatrix, GraphParts, HetGraph, Labels, RelationType, Splits};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(name: &str, src: usize, dst: usize, reverse_of: Option<usize>) -> RelationType {
    RelationType { name: name.into(), src, dst, reverse_of }
}

/// Types a (target), b, c with reverse pairs a-b, b-c, a-c. At most 30 nodes.
pub fn random_typed_graph(seed: u64, classes: usize) -> HetGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = [rng.gen_range(3..=12), rng.gen_range(1..=9), rng.gen_range(1..=9)];
    let density: f64 = rng.gen_range(0.1..0.5);
    let pairs = [(0usize, 1usize), (1, 2), (0, 2)];
    let mut relations = Vec::new();
    let mut edges = Vec::new();
    for (i, &(s, d)) in pairs.iter().enumerate() {
        let mut fwd = Vec::new();
        for u in 0..counts[s] {
            for v in 0..counts[d] {
                if rng.gen_bool(density) {
                    fwd.push((u, v));
                    // occasional parallel edge
                    if rng.gen_bool(0.1) {
                        fwd.push((u, v));
                    }
                }
            }
        }
        let rev: Vec<_> = fwd.iter().map(|&(u, v)| (v, u)).collect();
        relations.push(rel(&format!("r{i}"), s, d, None));
        relations.push(rel(&format!("r{i}_rev"), d, s, Some(2 * i)));
        edges.push(fwd);
        edges.push(rev);
    }
    let n = counts[0];
    let labels = Labels::Single((0..n).map(|_| Some(rng.gen_range(0..classes))).collect());
    let feat: Vec<f32> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    HetGraph::new(GraphParts {
        node_types: vec!["a".into(), "b".into(), "c".into()],
        node_counts: counts.to_vec(),
        relations,
        edges,
        features: vec![Some(FeatureMatrix::new(n, 3, feat).unwrap()), None, None],
        target_type: 0,
        num_classes: classes,
        labels,
        splits: Splits::default(),
    })
    .unwrap()
}

pub const RANDOM_METAPATHS: [&str; 5] = ["a-b-a", "a-c-a", "a-b-c-a", "a-c-b-a", "a-b-c-b-a"];

/// Counts typed walks by depth-first enumeration over the edge lists.
pub fn brute_force_counts(g: &HetGraph, relations: &[usize]) -> Vec<Vec<u64>> {
    fn walk(g: &HetGraph, rels: &[usize], node: usize, out: &mut [u64]) {
        match rels.split_first() {
            None => out[node] += 1,
            Some((&r, rest)) => {
                for &(s, d) in g.edges(r) {
                    if s == node {
                        walk(g, rest, d, out);
                    }
                }
            }
        }
    }
    let n = g.num_targets();
    (0..n)
        .map(|u| {
            let mut row = vec![0u64; n];
            walk(g, relations, u, &mut row);
            row
        })
        .collect()
}
