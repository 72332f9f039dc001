use crate::graph::{Csr, HetGraph};

use super::Metapath;

/// Sparse nonnegative integer matrix in CSR form with sorted columns.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CountMatrix {
    n_rows: usize,
    n_cols: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<u64>,
}

impl CountMatrix {
    fn from_adjacency(adj: &Csr, n_cols: usize) -> Self {
        let mut m = CountMatrix {
            n_rows: adj.n_rows(),
            n_cols,
            offsets: vec![0],
            cols: Vec::new(),
            values: Vec::new(),
        };
        let mut row: Vec<usize> = Vec::new();
        for r in 0..adj.n_rows() {
            row.clear();
            row.extend_from_slice(adj.row(r));
            row.sort_unstable();
            let mut i = 0;
            while i < row.len() {
                let c = row[i];
                let mut k = 0u64;
                while i < row.len() && row[i] == c {
                    k += 1;
                    i += 1;
                }
                m.cols.push(c);
                m.values.push(k);
            }
            m.offsets.push(m.cols.len());
        }
        m
    }

    /// Sparse product with a dense row accumulator.
    fn multiply(&self, other: &CountMatrix) -> CountMatrix {
        assert_eq!(self.n_cols, other.n_rows, "inner dimensions");
        let mut acc = vec![0u64; other.n_cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut out = CountMatrix {
            n_rows: self.n_rows,
            n_cols: other.n_cols,
            offsets: vec![0],
            cols: Vec::new(),
            values: Vec::new(),
        };
        for r in 0..self.n_rows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if acc[c] == 0 {
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                out.cols.push(c);
                out.values.push(acc[c]);
                acc[c] = 0;
            }
            touched.clear();
            out.offsets.push(out.cols.len());
        }
        out
    }

    fn transpose(&self) -> CountMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.cols {
            counts[c + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0; self.cols.len()];
        let mut values = vec![0; self.cols.len()];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                cols[fill[c]] = r;
                values[fill[c]] = v;
                fill[c] += 1;
            }
        }
        CountMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            offsets: counts,
            cols,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// `(column, count)` pairs of row `r`, ascending by column.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        let span = self.offsets[r]..self.offsets[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(i) => self.values[span.start + i],
            Err(_) => 0,
        }
    }

    /// Dense copy, row-major. Intended for small matrices and tests.
    pub fn to_dense(&self) -> Vec<Vec<u64>> {
        let mut d = vec![vec![0; self.n_cols]; self.n_rows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }
}

/// Metapath-induced graph over target nodes. `counts[u][v]` is the number
/// of metapath instances from `u` to `v`; the edge set is the off-diagonal
/// support.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InducedGraph {
    metapath: Metapath,
    counts: CountMatrix,
    by_target: CountMatrix,
}

impl InducedGraph {
    pub fn metapath(&self) -> &Metapath {
        &self.metapath
    }

    pub fn counts(&self) -> &CountMatrix {
        &self.counts
    }

    pub fn num_nodes(&self) -> usize {
        self.counts.n_rows()
    }

    pub fn count(&self, u: usize, v: usize) -> u64 {
        self.counts.get(u, v)
    }

    /// Neighbors `u != v` with `C(u, v) > 0`, ascending, with their counts.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.by_target.row(v).filter(move |&(u, _)| u != v)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors(v).count()
    }

    /// Every edge `(u, v, C(u, v))` with `u != v`, row-major.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        (0..self.counts.n_rows())
            .flat_map(move |u| self.counts.row(u).map(move |(v, c)| (u, v, c)))
            .filter(|&(u, v, _)| u != v)
    }

    /// Number of ordered off-diagonal pairs with a nonzero count.
    pub fn num_edges(&self) -> usize {
        self.edges().count()
    }
}

/// Counts metapath instances as the product of per-relation adjacency
/// matrices `A_{r_1} · … · A_{r_l}` (parallel edges count separately).
pub fn build_induced_graph(g: &HetGraph, p: &Metapath) -> InducedGraph {
    let rels = g.relations();
    let mut acc: Option<CountMatrix> = None;
    for &r in p.relations() {
        let m = CountMatrix::from_adjacency(g.out_adj(r), g.node_count(rels[r].dst));
        acc = Some(match acc {
            None => m,
            Some(prev) => prev.multiply(&m),
        });
    }
    let counts = acc.expect("metapaths have at least one relation");
    let by_target = counts.transpose();
    InducedGraph {
        metapath: p.clone(),
        counts,
        by_target,
    }
}
