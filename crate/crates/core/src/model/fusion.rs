use crate::graph::Labels;
use crate::nn::{NnError, Scalar, Tape, Var};

use super::ModelError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DecVariant {
    #[default]
    Cosine,
    CrossCov,
}

impl std::str::FromStr for DecVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(DecVariant::Cosine),
            "crosscov" => Ok(DecVariant::CrossCov),
            other => Err(format!("unknown decoupling variant {other:?}")),
        }
    }
}

/// `γ = σ([h_s ‖ h_r] w + b)`, `h = (1 − γ) h_s + γ h_r`. Returns `(h, γ)`.
pub fn fuse<T: Scalar>(
    tape: &mut Tape<T>,
    h_sem: Var,
    h_struct: Var,
    w: Var,
    b: Var,
) -> Result<(Var, Var), NnError> {
    if tape.value(h_sem).shape() != tape.value(h_struct).shape() {
        return Err(NnError::ShapeMismatch("channel outputs differ in shape".into()));
    }
    let cat = tape.concat(&[h_sem, h_struct])?;
    let z = tape.matmul(cat, w)?;
    let z = tape.add_row(z, b)?;
    let gamma = tape.sigmoid(z);
    let diff = tape.sub(h_struct, h_sem)?;
    let moved = tape.mul_col(diff, gamma)?;
    Ok((tape.add(h_sem, moved)?, gamma))
}

pub fn decouple_loss<T: Scalar>(
    tape: &mut Tape<T>,
    h_sem: Var,
    h_struct: Var,
    variant: DecVariant,
) -> Result<Var, NnError> {
    match variant {
        DecVariant::Cosine => tape.abs_cosine_mean(h_sem, h_struct),
        DecVariant::CrossCov => tape.cross_cov(h_sem, h_struct),
    }
}

/// Mean cross-entropy (single-label) or mean elementwise BCE (multi-label)
/// over `rows` of `logits`; `nodes[i]` is the global node of logit row `i`.
pub fn classification_loss<T: Scalar>(
    tape: &mut Tape<T>,
    logits: Var,
    rows: &[usize],
    nodes: &[usize],
    labels: &Labels,
) -> Result<Var, ModelError> {
    let rows: Vec<usize> = rows.iter().copied().filter(|&r| labels.is_labeled(nodes[r])).collect();
    if rows.is_empty() {
        return Err(ModelError::EmptyMask);
    }
    let loss = match labels {
        Labels::Single(l) => {
            let targets: Vec<usize> = rows.iter().map(|&r| l[nodes[r]].expect("labeled")).collect();
            tape.cross_entropy(logits, &rows, &targets)?
        }
        Labels::Multi(l) => {
            let targets: Vec<T> = rows
                .iter()
                .flat_map(|&r| l[nodes[r]].as_ref().expect("labeled").iter())
                .map(|&b| if b { T::one() } else { T::zero() })
                .collect();
            tape.bce_with_logits(logits, &rows, &targets)?
        }
    };
    Ok(loss)
}

/// `L = L_cls + α · L_dec`.
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    l_cls: Var,
    l_dec: Option<Var>,
    alpha: f64,
) -> Result<Var, NnError> {
    match l_dec {
        Some(d) if alpha != 0.0 => {
            let scaled = tape.scale(d, T::of_f64(alpha));
            tape.add(l_cls, scaled)
        }
        _ => Ok(l_cls),
    }
}
