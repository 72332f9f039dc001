use std::path::Path;

use crate::graph::{HetGraph, Labels};
use crate::model::{Ablation, HeterSeed, ModelConfig};
use crate::nn::{checkpoint, Tensor};

use super::{PseudoLabels, Provenance, TrainError};

const CONFIG: &str = "__config";
const PSEUDO: &str = "__pseudo_labels";

/// Writes parameters plus the architecture flags and pseudo-labels needed
/// to rebuild the model for evaluation.
pub fn save_checkpoint(path: &Path, model: &HeterSeed<f32>, pseudo: &PseudoLabels) -> Result<(), TrainError> {
    let c = &model.config;
    let a = c.ablation;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let config = Tensor::from_vec(
        &[1, 8],
        vec![
            c.hidden as f32,
            c.layers as f32,
            c.dropout as f32,
            flag(a.no_shc),
            flag(a.no_dec),
            flag(a.no_homo),
            flag(a.no_hetero),
            flag(a.no_mask),
        ],
    )?;
    let pseudo_t = match &pseudo.labels {
        Labels::Single(l) => Tensor::from_vec(
            &[l.len(), 1],
            l.iter().map(|y| y.map_or(-1.0, |y| y as f32)).collect(),
        )?,
        Labels::Multi(l) => {
            let c = model.num_classes();
            let mut data = Vec::with_capacity(l.len() * c);
            for y in l {
                match y {
                    Some(set) => data.extend(set.iter().map(|&b| flag(b))),
                    None => data.extend(std::iter::repeat(-1.0).take(c)),
                }
            }
            Tensor::from_vec(&[l.len(), c], data)?
        }
    };
    let mut entries: Vec<(&str, &Tensor<f32>)> = model.params.iter().collect();
    entries.push((CONFIG, &config));
    entries.push((PSEUDO, &pseudo_t));
    checkpoint::save(path, &entries)?;
    Ok(())
}

/// Rebuilds the model for `g` and restores its parameters and the
/// pseudo-labels it was trained against.
pub fn load_checkpoint(path: &Path, g: &HetGraph) -> Result<(HeterSeed<f32>, PseudoLabels), TrainError> {
    let entries = checkpoint::load(path)?;
    let find = |name: &str| {
        entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| TrainError::Checkpoint(format!("missing {name}")))
    };
    let cfg = find(CONFIG)?.data().to_vec();
    if cfg.len() != 8 {
        return Err(TrainError::Checkpoint("malformed config record".into()));
    }
    let on = |x: f32| x != 0.0;
    let config = ModelConfig {
        hidden: cfg[0] as usize,
        layers: cfg[1] as usize,
        // shortest decimal form of the stored f32 recovers the configured rate
        dropout: cfg[2].to_string().parse().unwrap_or(cfg[2] as f64),
        ablation: Ablation {
            no_shc: on(cfg[3]),
            no_dec: on(cfg[4]),
            no_homo: on(cfg[5]),
            no_hetero: on(cfg[6]),
            no_mask: on(cfg[7]),
        },
    };
    let mut model = HeterSeed::<f32>::new(g, config, 0)?;
    for id in 0..model.params.len() {
        let name = model.params.name(id).to_string();
        let t = find(&name)?;
        let dst = model.params.get_mut(id);
        if t.shape() != dst.shape() {
            return Err(TrainError::Checkpoint(format!(
                "{name}: shape {:?}, graph needs {:?}",
                t.shape(),
                dst.shape()
            )));
        }
        dst.data_mut().copy_from_slice(t.data());
    }
    let p = find(PSEUDO)?;
    let n = g.num_targets();
    if p.rows() != n {
        return Err(TrainError::Checkpoint(format!("{} pseudo-labels for {n} nodes", p.rows())));
    }
    let labels = match g.labels() {
        Labels::Single(_) => Labels::Single(
            (0..n)
                .map(|v| (p.get(v, 0) >= 0.0).then(|| p.get(v, 0) as usize))
                .collect(),
        ),
        Labels::Multi(_) => Labels::Multi(
            (0..n)
                .map(|v| {
                    let row = p.row(v);
                    (row.first() != Some(&-1.0)).then(|| row.iter().map(|&x| x > 0.5).collect())
                })
                .collect(),
        ),
    };
    let train = g.splits().mask(crate::graph::Split::Train, n);
    let provenance = (0..n)
        .map(|v| {
            if train[v] && g.labels().is_labeled(v) {
                Provenance::GroundTruth
            } else {
                Provenance::Predicted
            }
        })
        .collect();
    Ok((model, PseudoLabels { labels, provenance }))
}
