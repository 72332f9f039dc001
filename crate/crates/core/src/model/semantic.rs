use rand::Rng;

use crate::graph::HetGraph;
use crate::nn::{NnError, Scalar, Tape, Tensor, Var};

use super::SemanticPlan;

/// Per-type input map into the hidden space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputProjection<V> {
    Linear { w: V, b: V },
    /// Featureless type: one learnable row shared by all its nodes.
    Embedding(V),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemanticLayer<V> {
    pub w_self: V,
    /// One weight per relation, in schema order.
    pub w_rel: Vec<V>,
}

/// Level-0 hidden inputs for every type present in the plan; `None` for
/// types with no level-0 nodes.
pub fn project_inputs<T: Scalar>(
    tape: &mut Tape<T>,
    g: &HetGraph,
    plan: &SemanticPlan<T>,
    proj: &[InputProjection<Var>],
) -> Result<Vec<Option<Var>>, NnError> {
    (0..g.num_types())
        .map(|t| {
            let nodes = plan.nodes(0, t);
            if nodes.is_empty() {
                return Ok(None);
            }
            let out = match (proj[t], g.features(t)) {
                (InputProjection::Linear { w, b }, Some(f)) => {
                    let mut data = Vec::with_capacity(nodes.len() * f.cols);
                    for &v in nodes {
                        data.extend(f.row(v).iter().map(|&x| T::of_f64(x as f64)));
                    }
                    let x = tape.constant(Tensor::from_vec(&[nodes.len(), f.cols], data)?);
                    let xw = tape.matmul(x, w)?;
                    tape.add_row(xw, b)?
                }
                (InputProjection::Embedding(e), _) => tape.row_gather(e, &vec![0; nodes.len()])?,
                (InputProjection::Linear { .. }, None) => {
                    return Err(NnError::ShapeMismatch(format!(
                        "type {} has a projection but no features",
                        g.node_types()[t]
                    )))
                }
            };
            Ok(Some(out))
        })
        .collect()
}

/// Relation-wise mean aggregation, `L` layers:
/// `h_v' = ReLU(h_v W_self + Σ_r mean_{u ∈ N_r(v)} h_u W_r)`.
/// Dropout at `rate` follows every layer but the last. Returns the batch
/// rows of the target type.
pub fn semantic_forward<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    g: &HetGraph,
    plan: &SemanticPlan<T>,
    inputs: Vec<Option<Var>>,
    layers: &[SemanticLayer<Var>],
    dropout: f64,
    rng: &mut R,
) -> Result<Var, NnError> {
    if layers.len() != plan.num_layers() {
        return Err(NnError::ShapeMismatch(format!(
            "{} layers for a {}-layer plan",
            layers.len(),
            plan.num_layers()
        )));
    }
    let rels = g.relations();
    let mut h = inputs;
    for (li, layer) in layers.iter().enumerate() {
        let l = li + 1;
        let mut next = vec![None; g.num_types()];
        for (t, slot) in next.iter_mut().enumerate() {
            if plan.nodes(l, t).is_empty() {
                continue;
            }
            let prev = h[t].expect("level sets are nested");
            let own = tape.row_gather(prev, plan.self_index(l, t))?;
            let mut acc = tape.matmul(own, layer.w_self)?;
            for (r, rel) in rels.iter().enumerate() {
                if rel.dst != t {
                    continue;
                }
                let (Some(map), Some(src)) = (plan.relation_map(l, r), h[rel.src]) else {
                    continue;
                };
                if map.nnz() == 0 {
                    continue;
                }
                let mean = tape.spmm(map.clone(), src)?;
                let msg = tape.matmul(mean, layer.w_rel[r])?;
                acc = tape.add(acc, msg)?;
            }
            let mut out = tape.relu(acc);
            if l < layers.len() {
                out = tape.dropout(out, dropout, rng);
            }
            *slot = Some(out);
        }
        h = next;
    }
    Ok(h[plan.target_type()].expect("batch is non-empty"))
}
