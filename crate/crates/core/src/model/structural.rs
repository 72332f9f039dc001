use rand::Rng;

use crate::nn::{NnError, Scalar, Tape, Var};

use super::StructuralPlan;

/// Two-layer perceptron `ReLU(x W1 + b1) W2 + b2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mlp<V> {
    pub w1: V,
    pub b1: V,
    pub w2: V,
    pub b2: V,
}

impl Mlp<Var> {
    pub fn forward<T: Scalar, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        x: Var,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Var, NnError> {
        let h = tape.matmul(x, self.w1)?;
        let h = tape.add_row(h, self.b1)?;
        let h = tape.relu(h);
        let h = tape.dropout(h, dropout, rng);
        let o = tape.matmul(h, self.w2)?;
        tape.add_row(o, self.b2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StructuralParams<V> {
    pub homo: Mlp<V>,
    pub hetero: Mlp<V>,
    pub gate_w: V,
    pub gate_b: V,
}

/// Which branches feed the structural embedding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Branches {
    #[default]
    Both,
    HomoOnly,
    HeteroOnly,
}

/// `(Σ_{u ∈ homo(v)} ω̃ x̃_u, Σ_{u ∈ hetero(v)} ω̃ x̃_u)` for every batch row.
pub fn branch_aggregate<T: Scalar>(
    tape: &mut Tape<T>,
    x_tilde: Var,
    plan: &StructuralPlan<T>,
) -> Result<(Var, Var), NnError> {
    let homo = tape.spmm(plan.homo.clone(), x_tilde)?;
    let hetero = tape.spmm(plan.hetero.clone(), x_tilde)?;
    Ok((homo, hetero))
}

/// Dimension-wise gate over the transformed branches:
/// `σ(z) ⊙ T_homo + (1 − σ(z)) ⊙ T_hetero`, `z = [T_homo ‖ T_hetero] W_g + b_g`.
/// With a single branch enabled its transform is returned directly.
pub fn structural_fuse<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    h_homo: Var,
    h_hetero: Var,
    p: &StructuralParams<Var>,
    branches: Branches,
    dropout: f64,
    rng: &mut R,
) -> Result<Var, NnError> {
    if tape.value(h_homo).shape() != tape.value(h_hetero).shape() {
        return Err(NnError::ShapeMismatch("branch inputs differ in shape".into()));
    }
    match branches {
        Branches::HomoOnly => return p.homo.forward(tape, h_homo, dropout, rng),
        Branches::HeteroOnly => return p.hetero.forward(tape, h_hetero, dropout, rng),
        Branches::Both => {}
    }
    let th = p.homo.forward(tape, h_homo, dropout, rng)?;
    let te = p.hetero.forward(tape, h_hetero, dropout, rng)?;
    let cat = tape.concat(&[th, te])?;
    let z = tape.matmul(cat, p.gate_w)?;
    let z = tape.add_row(z, p.gate_b)?;
    let s = tape.sigmoid(z);
    // te + s ⊙ (th − te)
    let diff = tape.sub(th, te)?;
    let gated = tape.mul(s, diff)?;
    tape.add(te, gated)
}
