use std::collections::BTreeSet;
use std::sync::Arc;

use crate::graph::Labels;
use crate::nn::{derive_seed, NnError, Scalar, SparseRows, Tape, Var};

use super::{Mode, SemanticPlan};

/// Counter-based Bernoulli source for mask decisions: the draw for a node
/// depends only on `(seed, epoch, node)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskStream {
    pub seed: u64,
    pub epoch: u64,
}

impl MaskStream {
    pub fn uniform(&self, node: usize) -> f64 {
        let bits = derive_seed(derive_seed(self.seed, self.epoch), node as u64);
        (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn masked(&self, node: usize, beta: f64) -> bool {
        beta >= 1.0 || self.uniform(node) < beta
    }
}

/// Which label-embedding rows are added to which input rows. `map` sends
/// rows of `Z_label` to injected nodes; the last `Z_label` row is `[MASK]`.
#[derive(Clone, Debug)]
pub struct InjectionPlan<T> {
    /// Level-0 input positions receiving an embedding.
    pub positions: Vec<usize>,
    pub map: Arc<SparseRows<T>>,
    num_classes: usize,
}

impl<T: Scalar> InjectionPlan<T> {
    /// Only labeled nodes with `train_mask` set are injected. TRAIN masks
    /// each one with probability `beta`; INFER uses true rows, except that
    /// `beta = 1` keeps every node masked since true rows are never trained.
    pub fn build(
        plan: &SemanticPlan<T>,
        labels: &Labels,
        train_mask: &[bool],
        beta: f64,
        mode: Mode,
        stream: MaskStream,
        num_classes: usize,
    ) -> Self {
        let mut positions = Vec::new();
        let mut map = SparseRows::new(0);
        for (pos, &v) in plan.inputs().iter().enumerate() {
            if !train_mask[v] || !labels.is_labeled(v) {
                continue;
            }
            let masked = match mode {
                Mode::Train => stream.masked(v, beta),
                Mode::Infer => beta >= 1.0,
            };
            let row = positions.len();
            if masked {
                map.push(row, num_classes, T::one());
            } else {
                match labels {
                    Labels::Single(l) => map.push(row, l[v].expect("labeled"), T::one()),
                    Labels::Multi(l) => {
                        let set = l[v].as_ref().expect("labeled");
                        let k = set.iter().filter(|&&b| b).count();
                        if k == 0 {
                            map.push(row, num_classes, T::one());
                        }
                        for (c, _) in set.iter().enumerate().filter(|(_, &b)| b) {
                            map.push(row, c, T::one() / T::from_usize(k));
                        }
                    }
                }
            }
            positions.push(pos);
        }
        map.n_rows = positions.len();
        InjectionPlan {
            positions,
            map: Arc::new(map),
            num_classes,
        }
    }

    /// `Z_label` rows this plan reads.
    pub fn rows_read(&self) -> BTreeSet<usize> {
        self.map.cols.iter().copied().collect()
    }

    /// Whether any class row (anything but `[MASK]`) is read.
    pub fn reads_label_rows(&self) -> bool {
        self.map.cols.iter().any(|&c| c != self.num_classes)
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// `x̃ = x + scatter(g(z̃))` with `g(z) = z W + b`; rows outside the plan are
/// untouched.
pub fn mask_and_inject<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    inj: &InjectionPlan<T>,
    z: Var,
    g_w: Var,
    g_b: Var,
) -> Result<Var, NnError> {
    if inj.is_empty() {
        return Ok(x);
    }
    let n = tape.value(x).rows();
    let picked = tape.spmm(inj.map.clone(), z)?;
    let proj = tape.matmul(picked, g_w)?;
    let proj = tape.add_row(proj, g_b)?;
    let spread = tape.row_scatter_add(proj, &inj.positions, n)?;
    tape.add(x, spread)
}
