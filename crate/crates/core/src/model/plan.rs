use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

use crate::graph::HetGraph;
use crate::metapath::Partition;
use crate::nn::{Scalar, SparseRows};

/// Which nodes take part in one forward pass and how messages reach them.
///
/// Level `L` holds the batch of target nodes; level `l - 1` holds every node
/// of level `l` plus the in-neighbors it aggregates from. Level 0 also holds
/// the structural neighbors of the batch.
#[derive(Clone, Debug)]
pub struct SemanticPlan<T> {
    target: usize,
    /// `[level][type]`, sorted global indices.
    sets: Vec<Vec<Vec<usize>>>,
    /// `[layer][type]`: position of each level-`l` node within level `l - 1`.
    self_idx: Vec<Vec<Vec<usize>>>,
    /// `[layer][relation]`: mean aggregation from the source type at level
    /// `l - 1` into the destination type at level `l`.
    rel_maps: Vec<Vec<Option<Arc<SparseRows<T>>>>>,
}

/// Neighbor sampling settings; `fanout[i]` applies to hop `i` from the batch
/// and the last entry repeats for deeper hops.
pub struct Sampling<'a, R: Rng + ?Sized> {
    pub fanout: &'a [usize],
    pub rng: &'a mut R,
}

impl<T: Scalar> SemanticPlan<T> {
    /// Full neighborhoods for every target node.
    pub fn full(g: &HetGraph, layers: usize, structural: Option<&Partition>) -> Self {
        let batch: Vec<usize> = (0..g.num_targets()).collect();
        Self::build::<rand_chacha::ChaCha8Rng>(g, &batch, layers, None, structural)
    }

    pub fn build<R: Rng + ?Sized>(
        g: &HetGraph,
        batch: &[usize],
        layers: usize,
        mut sampling: Option<Sampling<'_, R>>,
        structural: Option<&Partition>,
    ) -> Self {
        assert!(layers >= 1, "at least one layer");
        debug_assert!(batch.windows(2).all(|w| w[0] < w[1]), "batch sorted and unique");
        let nt = g.num_types();
        let target = g.target_type();
        let rels = g.relations();
        let mut sets = vec![vec![Vec::new(); nt]; layers + 1];
        sets[layers][target] = batch.to_vec();
        // chosen[layer][relation][row] = sampled in-neighbors (global ids)
        let mut chosen: Vec<Vec<Vec<Vec<usize>>>> = vec![Vec::new(); layers];
        for l in (1..=layers).rev() {
            let hop = layers - l;
            let mut next = sets[l].clone();
            let mut per_rel = Vec::with_capacity(rels.len());
            for (r, rel) in rels.iter().enumerate() {
                let adj = g.in_adj(r);
                let mut rows = Vec::with_capacity(sets[l][rel.dst].len());
                for &v in &sets[l][rel.dst] {
                    // canonical order: neighbor index, so edge-list order never
                    // changes the reduction order
                    let mut nbrs = adj.row(v).to_vec();
                    nbrs.sort_unstable();
                    let picked: Vec<usize> = match sampling.as_mut() {
                        Some(s) => {
                            let k = *s.fanout.get(hop).or(s.fanout.last()).unwrap_or(&usize::MAX);
                            if nbrs.len() <= k {
                                nbrs
                            } else {
                                let mut idx = sample(&mut *s.rng, nbrs.len(), k).into_vec();
                                idx.sort_unstable();
                                idx.into_iter().map(|i| nbrs[i]).collect()
                            }
                        }
                        None => nbrs,
                    };
                    next[rel.src].extend_from_slice(&picked);
                    rows.push(picked);
                }
                per_rel.push(rows);
            }
            for s in &mut next {
                s.sort_unstable();
                s.dedup();
            }
            sets[l - 1] = next;
            chosen[l - 1] = per_rel;
        }
        if let Some(p) = structural {
            let level0 = &mut sets[0][target];
            for &v in batch {
                level0.extend_from_slice(p.homo(v));
                level0.extend_from_slice(p.hetero(v));
            }
            level0.sort_unstable();
            level0.dedup();
        }

        let mut self_idx = Vec::with_capacity(layers);
        let mut rel_maps = Vec::with_capacity(layers);
        for l in 1..=layers {
            self_idx.push(
                (0..nt)
                    .map(|t| sets[l][t].iter().map(|v| position(&sets[l - 1][t], *v)).collect())
                    .collect(),
            );
            let maps = rels
                .iter()
                .enumerate()
                .map(|(r, rel)| {
                    let rows = &chosen[l - 1][r];
                    if rows.is_empty() {
                        return None;
                    }
                    let mut m = SparseRows::new(rows.len());
                    for (i, picked) in rows.iter().enumerate() {
                        let w = T::one() / T::from_usize(picked.len().max(1));
                        for &u in picked {
                            m.push(i, position(&sets[l - 1][rel.src], u), w);
                        }
                    }
                    Some(Arc::new(m))
                })
                .collect();
            rel_maps.push(maps);
        }
        SemanticPlan {
            target,
            sets,
            self_idx,
            rel_maps,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.rel_maps.len()
    }

    pub fn target_type(&self) -> usize {
        self.target
    }

    /// Sorted global indices of type `t` at `level`.
    pub fn nodes(&self, level: usize, t: usize) -> &[usize] {
        &self.sets[level][t]
    }

    /// Batch nodes, in output row order.
    pub fn batch(&self) -> &[usize] {
        &self.sets[self.num_layers()][self.target]
    }

    /// Level-0 target nodes, the rows of the injected input.
    pub fn inputs(&self) -> &[usize] {
        &self.sets[0][self.target]
    }

    pub fn self_index(&self, layer: usize, t: usize) -> &[usize] {
        &self.self_idx[layer - 1][t]
    }

    pub fn relation_map(&self, layer: usize, r: usize) -> Option<&Arc<SparseRows<T>>> {
        self.rel_maps[layer - 1][r].as_ref()
    }

    /// Position of global target node `v` among the level-0 inputs.
    pub fn input_position(&self, v: usize) -> Option<usize> {
        self.inputs().binary_search(&v).ok()
    }
}

fn position(sorted: &[usize], v: usize) -> usize {
    sorted.binary_search(&v).expect("node present in previous level")
}

/// Homophilic and heterophilic weighted sums from level-0 inputs into batch
/// rows.
#[derive(Clone, Debug)]
pub struct StructuralPlan<T> {
    pub homo: Arc<SparseRows<T>>,
    pub hetero: Arc<SparseRows<T>>,
}

impl<T: Scalar> StructuralPlan<T> {
    pub fn build(plan: &SemanticPlan<T>, partition: &Partition) -> Self {
        let batch = plan.batch();
        let mut homo = SparseRows::new(batch.len());
        let mut hetero = SparseRows::new(batch.len());
        for (i, &v) in batch.iter().enumerate() {
            for (&u, &w) in partition.homo(v).iter().zip(partition.homo_weights(v)) {
                homo.push(i, position(plan.inputs(), u), T::of_f64(w));
            }
            for (&u, &w) in partition.hetero(v).iter().zip(partition.hetero_weights(v)) {
                hetero.push(i, position(plan.inputs(), u), T::of_f64(w));
            }
        }
        StructuralPlan {
            homo: Arc::new(homo),
            hetero: Arc::new(hetero),
        }
    }
}
