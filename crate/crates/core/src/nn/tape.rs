//! Reverse-mode differentiation over a linear record of tensor operations.
//!
//! Every operation appends one node holding its forward value. [`Tape::backward`]
//! walks the nodes in reverse execution order exactly once, propagating
//! adjoints from the loss to every grad-requiring leaf. Leaf gradients are
//! accumulated across backward calls until [`Tape::zero_grad`].
//!
//! All operations work on 2-D tensors; scalars are `1 × 1`.

use std::sync::Arc;

use rand::Rng;

use super::{NnError, Scalar, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Weighted sparse row map: `out[rows[k]] += weights[k] * x[cols[k]]`.
///
/// This is the bridge between sparse graph structure and the dense tape:
/// mean aggregation, structural weighted sums and sampled neighborhoods are
/// all expressed as one of these.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRows<T> {
    pub n_rows: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub weights: Vec<T>,
}

impl<T: Scalar> SparseRows<T> {
    pub fn new(n_rows: usize) -> Self {
        SparseRows {
            n_rows,
            rows: Vec::new(),
            cols: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, weight: T) {
        self.rows.push(row);
        self.cols.push(col);
        self.weights.push(weight);
    }

    pub fn nnz(&self) -> usize {
        self.rows.len()
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Affine(Var, T),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    Concat(Vec<Var>),
    RowGather(Var, Vec<usize>),
    RowScatterAdd(Var, Vec<usize>),
    SpMM(Var, Arc<SparseRows<T>>),
    Dropout(Var, Vec<T>),
    MeanRows(Var),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        rows: Vec<usize>,
        targets: Vec<usize>,
    },
    Bce {
        logits: Var,
        rows: Vec<usize>,
        targets: Vec<T>,
    },
    AbsCosine(Var, Var),
    CrossCov(Var, Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    param: Option<usize>,
}

/// Recorded computation. One tape per forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    leaf_grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(msg: impl Into<String>) -> NnError {
    NnError::ShapeMismatch(msg.into())
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        let mut value = value;
        value.requires_grad = requires_grad;
        value.grad = None;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a leaf; it participates in differentiation iff
    /// `t.requires_grad`.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let rg = t.requires_grad;
        self.push(t, Op::Leaf, rg)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Records a trainable parameter leaf tagged with its store index.
    pub fn param(&mut self, id: usize, t: &Tensor<T>) -> Var {
        let v = self.push(t.clone(), Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.leaf_grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    /// `(param id, gradient)` for every parameter leaf that received one.
    pub fn param_grads(&self) -> impl Iterator<Item = (usize, &[T])> {
        self.nodes
            .iter()
            .zip(&self.leaf_grads)
            .filter_map(|(n, g)| Some((n.param?, g.as_deref()?)))
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(shape_err(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let t = Tensor::from_vec(&[m, n], out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::MatMul(a, b), rg))
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &str,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>, NnError> {
        if self.dims(a) != self.dims(b) {
            return Err(shape_err(format!(
                "{name}: {:?} vs {:?}",
                self.dims(a),
                self.dims(b)
            )));
        }
        let (m, n) = self.dims(a);
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::from_vec(&[m, n], data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let t = self.zip_same(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let t = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let t = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    /// `a (m×n) + bias (1×n)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, NnError> {
        let (m, n) = self.dims(a);
        if self.dims(bias) != (1, n) {
            return Err(shape_err(format!(
                "add_row: {m}x{n} + {:?}",
                self.dims(bias)
            )));
        }
        let b = self.value(bias).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(n.max(1)) {
            for (x, &y) in row.iter_mut().zip(&b) {
                *x += y;
            }
        }
        let t = Tensor::from_vec(&[m, n], data)?;
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(t, Op::AddRow(a, bias), rg))
    }

    /// `a (m×n) ⊙ s (m×1)` with `s` broadcast across columns.
    pub fn mul_col(&mut self, a: Var, s: Var) -> Result<Var, NnError> {
        let (m, n) = self.dims(a);
        if self.dims(s) != (m, 1) {
            return Err(shape_err(format!("mul_col: {m}x{n} * {:?}", self.dims(s))));
        }
        let sv = self.value(s).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for (i, row) in data.chunks_mut(n.max(1)).enumerate() {
            for x in row.iter_mut() {
                *x *= sv[i];
            }
        }
        let t = Tensor::from_vec(&[m, n], data)?;
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(t, Op::MulCol(a, s), rg))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Var {
        let (m, n) = self.dims(a);
        let data = self
            .value(a)
            .data()
            .iter()
            .map(|&x| scale * x + shift)
            .collect();
        let t = Tensor::from_vec(&[m, n], data).expect("same shape");
        let rg = self.rg(a);
        self.push(t, Op::Affine(a, scale), rg)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.affine(a, s, T::zero())
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.affine(a, -T::one(), T::one())
    }

    fn map(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let (m, n) = self.dims(a);
        let data = self.value(a).data().iter().map(|&x| f(x)).collect();
        let t = Tensor::from_vec(&[m, n], data).expect("same shape");
        let rg = self.rg(a);
        self.push(t, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| if x > T::zero() { x } else { T::zero() }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let mut data = self.value(a).data().to_vec();
        if n > 0 {
            for row in data.chunks_mut(n) {
                softmax_in_place(row);
            }
        }
        let t = Tensor::from_vec(&[m, n], data).expect("same shape");
        let rg = self.rg(a);
        self.push(t, Op::SoftmaxRows(a), rg)
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let m = parts
            .first()
            .map(|&p| self.dims(p).0)
            .ok_or_else(|| shape_err("concat of nothing"))?;
        if parts.iter().any(|&p| self.dims(p).0 != m) {
            return Err(shape_err("concat: row counts differ"));
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.dims(p).1).collect();
        let n: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let t = Tensor::from_vec(&[m, n], data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(t, Op::Concat(parts.to_vec()), rg))
    }

    /// `out[i] = a[idx[i]]`.
    pub fn row_gather(&mut self, a: Var, idx: &[usize]) -> Result<Var, NnError> {
        let (m, n) = self.dims(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(shape_err(format!("row_gather index {bad} >= {m}")));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            data.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        let t = Tensor::from_vec(&[idx.len(), n], data)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::RowGather(a, idx.to_vec()), rg))
    }

    /// `out[idx[i]] += a[i]` into `n_out` zero rows.
    pub fn row_scatter_add(
        &mut self,
        a: Var,
        idx: &[usize],
        n_out: usize,
    ) -> Result<Var, NnError> {
        let (m, n) = self.dims(a);
        if idx.len() != m {
            return Err(shape_err(format!(
                "row_scatter_add: {} indices for {m} rows",
                idx.len()
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n_out) {
            return Err(shape_err(format!("row_scatter_add index {bad} >= {n_out}")));
        }
        let src = self.value(a).data();
        let mut data = vec![T::zero(); n_out * n];
        for (i, &dst) in idx.iter().enumerate() {
            for j in 0..n {
                data[dst * n + j] += src[i * n + j];
            }
        }
        let t = Tensor::from_vec(&[n_out, n], data)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::RowScatterAdd(a, idx.to_vec()), rg))
    }

    /// Sparse-dense product described by `map`; entries are applied in
    /// stored order.
    pub fn spmm(&mut self, map: Arc<SparseRows<T>>, x: Var) -> Result<Var, NnError> {
        let (m, n) = self.dims(x);
        if let Some(&bad) = map.cols.iter().find(|&&c| c >= m) {
            return Err(shape_err(format!("spmm column {bad} >= {m}")));
        }
        if let Some(&bad) = map.rows.iter().find(|&&r| r >= map.n_rows) {
            return Err(shape_err(format!("spmm row {bad} >= {}", map.n_rows)));
        }
        let src = self.value(x).data();
        let mut data = vec![T::zero(); map.n_rows * n];
        for k in 0..map.nnz() {
            let (r, c, w) = (map.rows[k], map.cols[k], map.weights[k]);
            for j in 0..n {
                data[r * n + j] += w * src[c * n + j];
            }
        }
        let t = Tensor::from_vec(&[map.n_rows, n], data)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::SpMM(x, map), rg))
    }

    /// Inverted dropout: zeroes each entry with probability `rate` and
    /// scales survivors by `1 / (1 - rate)`. Rate 0 returns `a` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Var {
        if rate <= 0.0 {
            return a;
        }
        let keep = if rate >= 1.0 {
            T::zero()
        } else {
            T::of_f64(1.0 / (1.0 - rate))
        };
        let len = self.value(a).len();
        let mask: Vec<T> = (0..len)
            .map(|_| {
                if rng.gen::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        self.dropout_with_mask(a, mask)
    }

    pub fn dropout_with_mask(&mut self, a: Var, mask: Vec<T>) -> Var {
        let (m, n) = self.dims(a);
        assert_eq!(mask.len(), m * n, "dropout mask length");
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(&mask)
            .map(|(&x, &k)| x * k)
            .collect();
        let t = Tensor::from_vec(&[m, n], data).expect("same shape");
        let rg = self.rg(a);
        self.push(t, Op::Dropout(a, mask), rg)
    }

    /// Column means, `1 × n`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let mut data = vec![T::zero(); n];
        for row in self.value(a).data().chunks(n.max(1)) {
            for (acc, &x) in data.iter_mut().zip(row) {
                *acc += x;
            }
        }
        if m > 0 {
            let inv = T::one() / T::from_usize(m);
            data.iter_mut().for_each(|x| *x *= inv);
        }
        let t = Tensor::from_vec(&[1, n], data).expect("shape");
        let rg = self.rg(a);
        self.push(t, Op::MeanRows(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Mean softmax cross-entropy over `rows` of `logits` against class
    /// indices `targets`.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        rows: &[usize],
        targets: &[usize],
    ) -> Result<Var, NnError> {
        let (m, c) = self.dims(logits);
        if rows.len() != targets.len() || rows.is_empty() {
            return Err(shape_err("cross_entropy: rows/targets mismatch or empty"));
        }
        if rows.iter().any(|&r| r >= m) || targets.iter().any(|&t| t >= c) {
            return Err(shape_err("cross_entropy: index out of range"));
        }
        let z = self.value(logits);
        let mut total = T::zero();
        for (&r, &t) in rows.iter().zip(targets) {
            let row = z.row(r);
            total += log_sum_exp(row) - row[t];
        }
        let loss = total / T::from_usize(rows.len());
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                rows: rows.to_vec(),
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Mean elementwise sigmoid binary cross-entropy over `rows`; `targets`
    /// holds `rows.len() × C` values in {0, 1}.
    pub fn bce_with_logits(
        &mut self,
        logits: Var,
        rows: &[usize],
        targets: &[T],
    ) -> Result<Var, NnError> {
        let (m, c) = self.dims(logits);
        if rows.is_empty() || targets.len() != rows.len() * c {
            return Err(shape_err("bce: rows/targets mismatch or empty"));
        }
        if rows.iter().any(|&r| r >= m) {
            return Err(shape_err("bce: row out of range"));
        }
        let z = self.value(logits);
        let mut total = T::zero();
        for (i, &r) in rows.iter().enumerate() {
            for (j, &x) in z.row(r).iter().enumerate() {
                let y = targets[i * c + j];
                total += x.max(T::zero()) - y * x + (T::one() + (-x.abs()).exp()).ln();
            }
        }
        let loss = total / T::from_usize(rows.len() * c);
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                logits,
                rows: rows.to_vec(),
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Mean over rows of `|cos(a_i, b_i)|`; rows where either side is zero
    /// contribute 0.
    pub fn abs_cosine_mean(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        if self.dims(a) != self.dims(b) {
            return Err(shape_err("abs_cosine_mean: shapes differ"));
        }
        let (m, _) = self.dims(a);
        let (va, vb) = (self.value(a), self.value(b));
        let mut total = T::zero();
        for i in 0..m {
            if let Some(c) = row_cosine(va.row(i), vb.row(i)) {
                total += c.abs();
            }
        }
        let loss = if m == 0 {
            T::zero()
        } else {
            total / T::from_usize(m)
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(loss), Op::AbsCosine(a, b), rg))
    }

    /// Squared Frobenius norm of the column-centred cross-covariance
    /// `A_cᵀ B_c / n`, divided by `d_a · d_b`.
    pub fn cross_cov(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (m, da) = self.dims(a);
        let (m2, db) = self.dims(b);
        if m != m2 {
            return Err(shape_err("cross_cov: row counts differ"));
        }
        let cov = cross_cov_matrix(self.value(a).data(), self.value(b).data(), m, da, db).0;
        let loss = if da * db == 0 {
            T::zero()
        } else {
            cov.iter().map(|&x| x * x).sum::<T>() / T::from_usize(da * db)
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(loss), Op::CrossCov(a, b), rg))
    }

    /// Propagates adjoints of the scalar `loss` to every grad-requiring leaf,
    /// adding into previously accumulated leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<(), NnError> {
        if loss.0 >= self.nodes.len() {
            return Err(NnError::DisconnectedLoss);
        }
        if self.dims(loss) != (1, 1) {
            return Err(shape_err(format!(
                "backward needs a scalar loss, got {:?}",
                self.dims(loss)
            )));
        }
        if !self.rg(loss) {
            return Err(NnError::DisconnectedLoss);
        }
        let mut adj: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, g, &mut adj);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: Vec<T>, adj: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let rg = |v: Var| nodes[v.0].requires_grad;
        let dims = |v: Var| (nodes[v.0].value.rows(), nodes[v.0].value.cols());
        let val = |v: Var| nodes[v.0].value.data();
        let out = nodes[i].value.data();
        match &nodes[i].op {
            Op::Leaf => {
                let slot = &mut self.leaf_grads[i];
                match slot {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    None => *slot = Some(g),
                }
            }
            &Op::MatMul(a, b) => {
                let (m, k) = dims(a);
                let (_, n) = dims(b);
                if rg(a) {
                    accumulate(adj, a, matmul_bt(&g, val(b), m, n, k));
                }
                if rg(b) {
                    accumulate(adj, b, matmul_at(val(a), &g, m, k, n));
                }
            }
            &Op::Add(a, b) => {
                if rg(a) {
                    accumulate(adj, a, g.clone());
                }
                if rg(b) {
                    accumulate(adj, b, g);
                }
            }
            &Op::Sub(a, b) => {
                if rg(b) {
                    accumulate(adj, b, g.iter().map(|&x| -x).collect());
                }
                if rg(a) {
                    accumulate(adj, a, g);
                }
            }
            &Op::Mul(a, b) => {
                if rg(a) {
                    accumulate(adj, a, g.iter().zip(val(b)).map(|(&x, &y)| x * y).collect());
                }
                if rg(b) {
                    accumulate(adj, b, g.iter().zip(val(a)).map(|(&x, &y)| x * y).collect());
                }
            }
            &Op::AddRow(a, bias) => {
                let (_, n) = dims(a);
                if rg(bias) {
                    let mut gb = vec![T::zero(); n];
                    for row in g.chunks(n.max(1)) {
                        gb.iter_mut().zip(row).for_each(|(s, &x)| *s += x);
                    }
                    accumulate(adj, bias, gb);
                }
                if rg(a) {
                    accumulate(adj, a, g);
                }
            }
            &Op::MulCol(a, s) => {
                let (m, n) = dims(a);
                let sv = val(s);
                if rg(s) {
                    let av = val(a);
                    let gs = (0..m)
                        .map(|r| (0..n).map(|c| g[r * n + c] * av[r * n + c]).sum())
                        .collect();
                    accumulate(adj, s, gs);
                }
                if rg(a) {
                    let ga = g
                        .iter()
                        .enumerate()
                        .map(|(idx, &x)| x * sv[idx / n.max(1)])
                        .collect();
                    accumulate(adj, a, ga);
                }
            }
            &Op::Affine(a, s) => accumulate(adj, a, g.iter().map(|&x| x * s).collect()),
            &Op::Relu(a) => {
                let ga = g
                    .iter()
                    .zip(val(a))
                    .map(|(&x, &y)| if y > T::zero() { x } else { T::zero() })
                    .collect();
                accumulate(adj, a, ga);
            }
            &Op::Sigmoid(a) => {
                let ga = g
                    .iter()
                    .zip(out)
                    .map(|(&x, &y)| x * y * (T::one() - y))
                    .collect();
                accumulate(adj, a, ga);
            }
            &Op::SoftmaxRows(a) => {
                let (_, n) = dims(a);
                let mut ga = vec![T::zero(); g.len()];
                for ((gr, yr), dst) in g.chunks(n.max(1)).zip(out.chunks(n.max(1))).zip(ga.chunks_mut(n.max(1))) {
                    let dot: T = gr.iter().zip(yr).map(|(&x, &y)| x * y).sum();
                    for j in 0..gr.len() {
                        dst[j] = yr[j] * (gr[j] - dot);
                    }
                }
                accumulate(adj, a, ga);
            }
            Op::Concat(parts) => {
                let n: usize = parts.iter().map(|&p| dims(p).1).sum();
                let mut offset = 0;
                for &p in parts {
                    let (m, w) = dims(p);
                    if rg(p) {
                        let mut gp = Vec::with_capacity(m * w);
                        for r in 0..m {
                            gp.extend_from_slice(&g[r * n + offset..r * n + offset + w]);
                        }
                        accumulate(adj, p, gp);
                    }
                    offset += w;
                }
            }
            Op::RowGather(a, idx) => {
                let (m, n) = dims(*a);
                let mut ga = vec![T::zero(); m * n];
                for (i, &src) in idx.iter().enumerate() {
                    for j in 0..n {
                        ga[src * n + j] += g[i * n + j];
                    }
                }
                accumulate(adj, *a, ga);
            }
            Op::RowScatterAdd(a, idx) => {
                let (_, n) = dims(*a);
                let mut ga = Vec::with_capacity(idx.len() * n);
                for &dst in idx {
                    ga.extend_from_slice(&g[dst * n..(dst + 1) * n]);
                }
                accumulate(adj, *a, ga);
            }
            Op::SpMM(x, map) => {
                let (m, n) = dims(*x);
                let mut gx = vec![T::zero(); m * n];
                for k in 0..map.nnz() {
                    let (r, c, w) = (map.rows[k], map.cols[k], map.weights[k]);
                    for j in 0..n {
                        gx[c * n + j] += w * g[r * n + j];
                    }
                }
                accumulate(adj, *x, gx);
            }
            Op::Dropout(a, mask) => {
                accumulate(adj, *a, g.iter().zip(mask).map(|(&x, &k)| x * k).collect());
            }
            &Op::MeanRows(a) => {
                let (m, n) = dims(a);
                let inv = T::one() / T::from_usize(m.max(1));
                let mut ga = Vec::with_capacity(m * n);
                for _ in 0..m {
                    ga.extend(g.iter().map(|&x| x * inv));
                }
                accumulate(adj, a, ga);
            }
            &Op::Sum(a) => {
                let len = nodes[a.0].value.len();
                accumulate(adj, a, vec![g[0]; len]);
            }
            Op::CrossEntropy {
                logits,
                rows,
                targets,
            } => {
                let (m, c) = dims(*logits);
                let z = &nodes[logits.0].value;
                let scale = g[0] / T::from_usize(rows.len());
                let mut gz = vec![T::zero(); m * c];
                let mut p = vec![T::zero(); c];
                for (&r, &t) in rows.iter().zip(targets) {
                    p.copy_from_slice(z.row(r));
                    softmax_in_place(&mut p);
                    for j in 0..c {
                        let y = if j == t { T::one() } else { T::zero() };
                        gz[r * c + j] += scale * (p[j] - y);
                    }
                }
                accumulate(adj, *logits, gz);
            }
            Op::Bce {
                logits,
                rows,
                targets,
            } => {
                let (m, c) = dims(*logits);
                let z = &nodes[logits.0].value;
                let scale = g[0] / T::from_usize(rows.len() * c);
                let mut gz = vec![T::zero(); m * c];
                for (i, &r) in rows.iter().enumerate() {
                    for j in 0..c {
                        let y = targets[i * c + j];
                        gz[r * c + j] += scale * (sigmoid(z.get(r, j)) - y);
                    }
                }
                accumulate(adj, *logits, gz);
            }
            &Op::AbsCosine(a, b) => {
                let (m, n) = dims(a);
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                let scale = g[0] / T::from_usize(m.max(1));
                let mut ga = vec![T::zero(); m * n];
                let mut gb = vec![T::zero(); m * n];
                for i in 0..m {
                    let (ra, rb) = (va.row(i), vb.row(i));
                    let na = norm(ra);
                    let nb = norm(rb);
                    if na == T::zero() || nb == T::zero() {
                        continue;
                    }
                    let dot: T = ra.iter().zip(rb).map(|(&x, &y)| x * y).sum();
                    let c = dot / (na * nb);
                    let sign = if c > T::zero() {
                        T::one()
                    } else if c < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    };
                    let s = scale * sign;
                    for j in 0..n {
                        ga[i * n + j] = s * (rb[j] / (na * nb) - c * ra[j] / (na * na));
                        gb[i * n + j] = s * (ra[j] / (na * nb) - c * rb[j] / (nb * nb));
                    }
                }
                if rg(a) {
                    accumulate(adj, a, ga);
                }
                if rg(b) {
                    accumulate(adj, b, gb);
                }
            }
            &Op::CrossCov(a, b) => {
                let (m, da) = dims(a);
                let (_, db) = dims(b);
                let (cov, ac, bc) = cross_cov_matrix(val(a), val(b), m, da, db);
                let factor = g[0] * T::of_f64(2.0) / T::from_usize((da * db).max(1) * m.max(1));
                let gc: Vec<T> = cov.iter().map(|&x| x * factor).collect();
                if rg(a) {
                    // (B_c · Gᵀ): m×db times db×da
                    accumulate(adj, a, matmul_bt(&bc, &gc, m, db, da));
                }
                if rg(b) {
                    accumulate(adj, b, matmul_raw(&ac, &gc, m, da, db));
                }
            }
        }
    }
}

fn accumulate<T: Scalar>(adj: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
    match &mut adj[v.0] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for x in row.iter_mut() {
        *x = (*x - mx).exp();
        s += *x;
    }
    for x in row.iter_mut() {
        *x = *x / s;
    }
}

pub(crate) fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
    mx + row.iter().map(|&x| (x - mx).exp()).sum::<T>().ln()
}

fn norm<T: Scalar>(r: &[T]) -> T {
    r.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Cosine of two rows, `None` when either is the zero vector.
pub(crate) fn row_cosine<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    let (na, nb) = (norm(a), norm(b));
    if na == T::zero() || nb == T::zero() {
        return None;
    }
    let dot: T = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    Some(dot / (na * nb))
}

/// Returns `(cov, A_c, B_c)` with `cov = A_cᵀ B_c / m` (da × db).
fn cross_cov_matrix<T: Scalar>(
    a: &[T],
    b: &[T],
    m: usize,
    da: usize,
    db: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let center = |x: &[T], d: usize| {
        let mut mean = vec![T::zero(); d];
        for row in x.chunks(d.max(1)) {
            mean.iter_mut().zip(row).for_each(|(s, &v)| *s += v);
        }
        if m > 0 {
            let inv = T::one() / T::from_usize(m);
            mean.iter_mut().for_each(|s| *s *= inv);
        }
        x.iter()
            .enumerate()
            .map(|(i, &v)| v - mean[i % d.max(1)])
            .collect::<Vec<T>>()
    };
    let ac = center(a, da);
    let bc = center(b, db);
    let mut cov = matmul_at(&ac, &bc, m, da, db);
    if m > 0 {
        let inv = T::one() / T::from_usize(m);
        cov.iter_mut().for_each(|x| *x *= inv);
    }
    (cov, ac, bc)
}

/// `a (m×k) · b (k×n)`.
pub(crate) fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `g (m×n) · bᵀ` where `b` is `k×n`; result `m×k`.
fn matmul_bt<T: Scalar>(g: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ · g` where `a` is `m×k` and `g` is `m×n`; result `k×n`.
fn matmul_at<T: Scalar>(a: &[T], g: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += aip * gv;
            }
        }
    }
    out
}

#[cfg(test)]
#[path = "tape_tests.rs"]
mod tests;
