use std::collections::BTreeMap;

use heterseed::graph::{HetGraph, Labels};
use heterseed::metapath::{build_induced_graph, global_homophily, parse_metapaths};
use heterseed::model::{Ablation, HeterSeed, Mode, ModelConfig, SemanticPlan, Step};
use heterseed::synth::{
    bias_simulation, gen_author_groups, gen_theorem1, gen_theorem1_baseline, inject_cliques,
    metapath_cliques, sbm_inject, GroupConfig, InjectMode, SynthError, Theorem1Config,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn apa(g: &HetGraph) -> heterseed::metapath::InducedGraph {
    build_induced_graph(g, &parse_metapaths(g, "author-paper-author").unwrap()[0])
}

#[test]
fn theorem1_counts_on_designated_pairs() {
    let n = 20;
    let g = gen_theorem1(&Theorem1Config { n, m_same: 3, m_diff: 1, dim: 4 }).unwrap();
    let ig = apa(&g);
    for u in 0..2 * n {
        for v in 0..2 * n {
            if u == v {
                continue;
            }
            let (iu, iv) = (u % n, v % n);
            let same_class = (u < n) == (v < n);
            let want = if same_class && (iv == (iu + 1) % n || iu == (iv + 1) % n) {
                3
            } else if !same_class && iu == iv {
                1
            } else {
                0
            };
            assert_eq!(ig.count(u, v), want, "pair ({u}, {v})");
        }
    }
    assert_eq!(g.labels().single().unwrap().iter().filter(|y| **y == Some(0)).count(), n);
    let train = g.splits().get(heterseed::graph::Split::Train);
    assert!(train.iter().any(|&v| v < n) && train.iter().any(|&v| v >= n));
}

#[test]
fn theorem1_rejects_degenerate_configs() {
    let one = gen_theorem1(&Theorem1Config { n: 1, m_same: 2, m_diff: 1, dim: 4 });
    assert!(matches!(one, Err(SynthError::SameClassPairRequired)));
    let flat = gen_theorem1(&Theorem1Config { n: 4, m_same: 1, m_diff: 1, dim: 4 });
    assert!(matches!(flat, Err(SynthError::Config(_))));
}

/// Depth-2 typed rooted signature: own degree plus the sorted degrees of
/// the papers reached.
fn signature(g: &HetGraph, author: usize) -> (usize, Vec<usize>) {
    let writes = g.relation_index("writes").unwrap();
    let written_by = g.relation_index("written_by").unwrap();
    let papers = g.out_adj(writes).row(author);
    let mut degrees: Vec<usize> = papers.iter().map(|&p| g.out_adj(written_by).row(p).len()).collect();
    degrees.sort_unstable();
    (papers.len(), degrees)
}

#[test]
fn baseline_wiring_is_symmetric() {
    let g = gen_theorem1_baseline(10, 4).unwrap();
    let first = signature(&g, 0);
    for a in 1..g.num_targets() {
        assert_eq!(signature(&g, a), first);
    }
    let f = g.features(0).unwrap();
    for a in 1..g.num_targets() {
        assert_eq!(f.row(a), f.row(0));
    }
}

#[test]
fn semantic_channel_collapses_on_baseline() {
    let g = gen_theorem1_baseline(10, 4).unwrap();
    let cfg = ModelConfig {
        hidden: 8,
        layers: 2,
        dropout: 0.0,
        ablation: Ablation { no_shc: true, no_mask: true, ..Ablation::default() },
    };
    let m = HeterSeed::<f32>::new(&g, cfg, 3).unwrap().cast::<f64>();
    let plan = SemanticPlan::full(&g, 2, None);
    let step = Step { plan: &plan, structural: None, injection: None, mode: Mode::Infer };
    let out = m.forward(&g, &step, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let h = out.value(out.h_sem);
    for v in 1..h.rows() {
        for (a, b) in h.row(v).iter().zip(h.row(0)) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn group_base_is_homophilous() {
    for seed in 0..5 {
        let g = gen_author_groups(&GroupConfig { seed, ..GroupConfig::default() }).unwrap();
        let h = global_homophily(&apa(&g), g.labels()).unwrap();
        assert!((h - 0.8).abs() <= 0.05, "seed {seed}: {h}");
    }
}

#[test]
fn zero_rho_leaves_labels_and_topology() {
    let base = gen_author_groups(&GroupConfig::default()).unwrap();
    let mps = parse_metapaths(&base, "A-P-A").unwrap();
    for mode in [InjectMode::High, InjectMode::Low] {
        let g = sbm_inject(&base, &mps, 0.0, mode, 1).unwrap();
        assert_eq!(g.labels(), base.labels());
    }
    let g = sbm_inject(&base, &mps, 0.7, InjectMode::Low, 1).unwrap();
    assert_ne!(g.labels(), base.labels());
    for r in 0..base.relations().len() {
        assert_eq!(g.edges(r), base.edges(r));
    }
    assert_eq!(g.features(0), base.features(0));
    assert_eq!(g.splits(), base.splits());
}

fn one_group() -> HetGraph {
    gen_author_groups(&GroupConfig { groups: 1, seed: 2, ..GroupConfig::default() }).unwrap()
}

#[test]
fn high_injection_on_one_clique_unifies_labels() {
    let base = one_group();
    let mps = parse_metapaths(&base, "A-P-A").unwrap();
    let g = sbm_inject(&base, &mps, 1.0, InjectMode::High, 5).unwrap();
    let y = g.labels().single().unwrap();
    assert!(y.iter().all(|l| *l == y[0]));
    assert_eq!(global_homophily(&apa(&g), g.labels()), Ok(1.0));
}

#[test]
fn low_injection_spreads_classes_round_robin() {
    let base = one_group();
    let mps = parse_metapaths(&base, "A-P-A").unwrap();
    let g = sbm_inject(&base, &mps, 1.0, InjectMode::Low, 5).unwrap();
    let mut counts = BTreeMap::new();
    for l in g.labels().single().unwrap() {
        *counts.entry(l.unwrap()).or_insert(0) += 1;
    }
    assert_eq!(counts.values().copied().collect::<Vec<_>>(), vec![2, 2, 2]);
}

#[test]
fn cliques_are_the_groups() {
    let g = gen_author_groups(&GroupConfig { groups: 7, ..GroupConfig::default() }).unwrap();
    let cliques = metapath_cliques(&g, &parse_metapaths(&g, "A-P-A").unwrap());
    assert_eq!(cliques.len(), 7);
    assert!(cliques.iter().all(|c| c.len() == 6));
    let mut all: Vec<usize> = cliques.concat();
    all.sort_unstable();
    assert_eq!(all, (0..42).collect::<Vec<_>>());
}

#[test]
fn injection_selection_is_nested_in_rho() {
    let base = gen_author_groups(&GroupConfig::default()).unwrap();
    let mps = parse_metapaths(&base, "A-P-A").unwrap();
    let cliques = metapath_cliques(&base, &mps);
    let changed = |rho: f64| -> Vec<usize> {
        let g = inject_cliques(&base, &cliques, rho, InjectMode::High, 3).unwrap();
        (0..cliques.len())
            .filter(|&k| cliques[k].iter().any(|&v| g.labels().single().unwrap()[v] != base.labels().single().unwrap()[v]))
            .collect()
    };
    let (low, high) = (changed(0.3), changed(0.8));
    assert!(low.iter().all(|k| high.contains(k)));
}

#[test]
fn injection_rejects_rho_out_of_range() {
    let base = one_group();
    let mps = parse_metapaths(&base, "A-P-A").unwrap();
    assert!(sbm_inject(&base, &mps, 1.5, InjectMode::High, 0).is_err());
}

#[test]
fn bias_examples() {
    let rows = bias_simulation(&[0.0, 0.5], 200, 1).unwrap();
    assert!(rows[0].empirical.abs() < 1e-12);
    assert!((rows[1].empirical - 1.0).abs() < 1e-12);
    assert_eq!(rows[1].closed_form, 1.0);
    assert!(bias_simulation(&[1.2], 10, 0).is_err());
    assert!(bias_simulation(&[0.2], 0, 0).is_err());
}

#[test]
fn unlabeled_nodes_survive_injection() {
    let base = one_group();
    let mut y = base.labels().single().unwrap().to_vec();
    y[0] = None;
    let g = base.with_labels(Labels::Single(y)).unwrap();
    let mps = parse_metapaths(&g, "A-P-A").unwrap();
    let out = sbm_inject(&g, &mps, 1.0, InjectMode::Low, 2).unwrap();
    assert_eq!(out.labels().single().unwrap()[0], None);
}
