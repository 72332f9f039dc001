use super::{InducedGraph, MetapathError};

/// Union neighbor lists over all metapaths with summed instance counts and
/// their per-node softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuralWeights {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    raw: Vec<u64>,
    norm: Vec<f64>,
}

impl StructuralWeights {
    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn raw(&self, v: usize) -> &[u64] {
        &self.raw[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn normalized(&self, v: usize) -> &[f64] {
        &self.norm[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn nnz(&self) -> usize {
        self.neighbors.len()
    }
}

/// Sums counts over metapaths and normalizes per target node with a
/// max-shifted softmax. Neighbor lists are ascending by index.
pub fn structural_weights(graphs: &[InducedGraph]) -> Result<StructuralWeights, MetapathError> {
    let n = match graphs.first() {
        Some(ig) => ig.num_nodes(),
        None => return Err(MetapathError::EmptyList),
    };
    if graphs.iter().any(|ig| ig.num_nodes() != n) {
        return Err(MetapathError::TargetMismatch);
    }
    let mut acc = vec![0u64; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut w = StructuralWeights {
        offsets: vec![0],
        neighbors: Vec::new(),
        raw: Vec::new(),
        norm: Vec::new(),
    };
    for v in 0..n {
        for ig in graphs {
            for (u, c) in ig.neighbors(v) {
                if acc[u] == 0 {
                    touched.push(u);
                }
                acc[u] += c;
            }
        }
        touched.sort_unstable();
        let start = w.raw.len();
        for &u in &touched {
            w.neighbors.push(u);
            w.raw.push(acc[u]);
            acc[u] = 0;
        }
        touched.clear();
        let raw = &w.raw[start..];
        if let Some(&max) = raw.iter().max() {
            let exps: Vec<f64> = raw.iter().map(|&c| (c as f64 - max as f64).exp()).collect();
            let z: f64 = exps.iter().sum();
            w.norm.extend(exps.iter().map(|e| e / z));
        }
        w.offsets.push(w.neighbors.len());
    }
    Ok(w)
}
