use crate::graph::Labels;

use super::StructuralWeights;

/// Homophilic and heterophilic neighbor lists per node. Each entry keeps
/// the union-normalized weight of its neighbor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Partition {
    homo: Branch,
    hetero: Branch,
}

#[derive(Clone, Debug, PartialEq)]
struct Branch {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
}

impl Default for Branch {
    fn default() -> Self {
        Branch { offsets: vec![0], neighbors: Vec::new(), weights: Vec::new() }
    }
}

impl Branch {
    fn span(&self, v: usize) -> std::ops::Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }
}

impl Partition {
    pub fn num_nodes(&self) -> usize {
        self.homo.offsets.len() - 1
    }

    pub fn homo(&self, v: usize) -> &[usize] {
        &self.homo.neighbors[self.homo.span(v)]
    }

    pub fn homo_weights(&self, v: usize) -> &[f64] {
        &self.homo.weights[self.homo.span(v)]
    }

    pub fn hetero(&self, v: usize) -> &[usize] {
        &self.hetero.neighbors[self.hetero.span(v)]
    }

    pub fn hetero_weights(&self, v: usize) -> &[f64] {
        &self.hetero.weights[self.hetero.span(v)]
    }

    /// `(row, col, weight)` triples of one branch, rows ascending.
    pub fn entries(&self, homophilic: bool) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let b = if homophilic { &self.homo } else { &self.hetero };
        (0..self.num_nodes()).flat_map(move |v| {
            b.span(v).map(move |k| (v, b.neighbors[k], b.weights[k]))
        })
    }
}

/// Splits every union neighbor list by pseudo-label agreement. Nodes with
/// no pseudo-label agree with nobody.
pub fn partition_neighbors(w: &StructuralWeights, pseudo: &Labels) -> Partition {
    assert_eq!(pseudo.len(), w.num_nodes(), "one pseudo-label per target node");
    let mut p = Partition::default();
    for v in 0..w.num_nodes() {
        for (&u, &wt) in w.neighbors(v).iter().zip(w.normalized(v)) {
            let b = if pseudo.same(u, v) { &mut p.homo } else { &mut p.hetero };
            b.neighbors.push(u);
            b.weights.push(wt);
        }
        p.homo.offsets.push(p.homo.neighbors.len());
        p.hetero.offsets.push(p.hetero.neighbors.len());
    }
    p
}
