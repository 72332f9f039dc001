/// Compressed sparse rows of neighbor indices. Within a row, entries keep
/// the order in which edges were supplied.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Csr {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Csr {
    pub fn from_edges(n_rows: usize, edges: impl Iterator<Item = (usize, usize)> + Clone) -> Self {
        let mut offsets = vec![0usize; n_rows + 1];
        for (r, _) in edges.clone() {
            offsets[r + 1] += 1;
        }
        for i in 0..n_rows {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0usize; offsets[n_rows]];
        for (r, c) in edges {
            targets[fill[r]] = c;
            fill[r] += 1;
        }
        Csr { offsets, targets }
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn nnz(&self) -> usize {
        self.targets.len()
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.targets[self.offsets[r]..self.offsets[r + 1]]
    }

    pub fn degree(&self, r: usize) -> usize {
        self.offsets[r + 1] - self.offsets[r]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n_rows()).map(|r| self.degree(r)).max().unwrap_or(0)
    }
}
