//! The two-channel node classifier: relation-wise semantic message passing,
//! a homophily/heterophily-split structural channel over metapath
//! neighbors, label injection with masking, and a gated fusion.

mod fusion;
mod masking;
mod plan;
mod semantic;
mod structural;

use rand::Rng;
use thiserror::Error;

use crate::graph::{GraphError, HetGraph};
use crate::metapath::MetapathError;
use crate::nn::{derive_seed, xavier_uniform, NnError, ParamStore, Scalar, Tape, Tensor, Var};

pub use fusion::{classification_loss, decouple_loss, fuse, total_loss, DecVariant};
pub use masking::{mask_and_inject, InjectionPlan, MaskStream};
pub use plan::{Sampling, SemanticPlan, StructuralPlan};
pub use semantic::{project_inputs, semantic_forward, InputProjection, SemanticLayer};
pub use structural::{branch_aggregate, structural_fuse, Branches, Mlp, StructuralParams};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Metapath(#[from] MetapathError),
    #[error("no labeled rows to compute a loss on")]
    EmptyMask,
    #[error("no projection for featured type {0}")]
    MissingProjection(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Components that can be switched off.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ablation {
    /// Semantic channel only; no decoupling term.
    pub no_shc: bool,
    pub no_dec: bool,
    pub no_homo: bool,
    pub no_hetero: bool,
    pub no_mask: bool,
}

impl Ablation {
    pub fn branches(&self) -> Branches {
        match (self.no_homo, self.no_hetero) {
            (true, false) => Branches::HeteroOnly,
            (false, true) => Branches::HomoOnly,
            _ => Branches::Both,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 128,
            layers: 2,
            dropout: 0.7,
            ablation: Ablation::default(),
        }
    }
}

/// Parameter ids in the store, structured like the network.
#[derive(Clone, Debug)]
pub struct ParamLayout {
    pub proj: Vec<InputProjection<usize>>,
    /// `(Z_label, g weight, g bias)`; `Z_label` has `C + 1` rows.
    pub label: Option<(usize, usize, usize)>,
    pub semantic: Vec<SemanticLayer<usize>>,
    pub structural: Option<StructuralParams<usize>>,
    pub fuse: Option<(usize, usize)>,
    pub classifier: (usize, usize),
}

#[derive(Clone, Debug)]
pub struct HeterSeed<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub layout: ParamLayout,
    num_classes: usize,
}

/// Everything one forward pass leaves on the tape.
pub struct ForwardOut<T> {
    pub tape: Tape<T>,
    /// Global target index of each output row.
    pub nodes: Vec<usize>,
    pub x_tilde: Var,
    pub h_sem: Var,
    pub h_struct: Option<Var>,
    pub gamma: Option<Var>,
    pub h: Var,
    pub logits: Var,
}

/// Per-pass inputs beyond the graph.
pub struct Step<'a, T> {
    pub plan: &'a SemanticPlan<T>,
    pub structural: Option<&'a StructuralPlan<T>>,
    pub injection: Option<&'a InjectionPlan<T>>,
    pub mode: Mode,
}

impl<T: Scalar> HeterSeed<T> {
    pub fn new(g: &HetGraph, config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        if config.layers == 0 || config.hidden == 0 {
            return Err(ModelError::Config("layers and hidden must be positive".into()));
        }
        let d = config.hidden;
        let c = g.num_classes();
        let mut params = ParamStore::new();
        let mut add = |name: String, shape: [usize; 2], zero: bool| {
            let t = if zero {
                Tensor::zeros(&shape)
            } else {
                xavier_uniform(&shape, derive_seed(seed, params.len() as u64))
            };
            params.add(name, t)
        };
        let mut proj = Vec::new();
        for (t, name) in g.node_types().iter().enumerate() {
            proj.push(match g.features(t) {
                Some(f) => InputProjection::Linear {
                    w: add(format!("proj.{name}.w"), [f.cols, d], false),
                    b: add(format!("proj.{name}.b"), [1, d], true),
                },
                None => InputProjection::Embedding(add(format!("emb.{name}"), [1, d], false)),
            });
        }
        let label = (!config.ablation.no_mask).then(|| {
            (
                add("label.z".into(), [c + 1, d], false),
                add("label.g.w".into(), [d, d], false),
                add("label.g.b".into(), [1, d], true),
            )
        });
        let semantic = (0..config.layers)
            .map(|l| SemanticLayer {
                w_self: add(format!("sem.{l}.self"), [d, d], false),
                w_rel: g
                    .relations()
                    .iter()
                    .map(|r| add(format!("sem.{l}.{}", r.name), [d, d], false))
                    .collect(),
            })
            .collect();
        let structural = (!config.ablation.no_shc).then(|| {
            let mut mlp = |branch: &str| Mlp {
                w1: add(format!("shc.{branch}.w1"), [d, d], false),
                b1: add(format!("shc.{branch}.b1"), [1, d], true),
                w2: add(format!("shc.{branch}.w2"), [d, d], false),
                b2: add(format!("shc.{branch}.b2"), [1, d], true),
            };
            let homo = mlp("homo");
            let hetero = mlp("hetero");
            StructuralParams {
                homo,
                hetero,
                gate_w: add("shc.gate.w".into(), [2 * d, d], false),
                gate_b: add("shc.gate.b".into(), [1, d], true),
            }
        });
        let fuse = (!config.ablation.no_shc).then(|| {
            (
                add("fuse.w".into(), [2 * d, 1], false),
                add("fuse.b".into(), [1, 1], true),
            )
        });
        let classifier = (
            add("cls.w".into(), [d, c], false),
            add("cls.b".into(), [1, c], true),
        );
        Ok(HeterSeed {
            config,
            params,
            layout: ParamLayout {
                proj,
                label,
                semantic,
                structural,
                fuse,
                classifier,
            },
            num_classes: c,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Same network with parameters converted to another precision.
    pub fn cast<U: Scalar>(&self) -> HeterSeed<U> {
        HeterSeed {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
            num_classes: self.num_classes,
        }
    }

    /// Runs the network for the batch described by `step`. Dropout is
    /// active only in `Mode::Train`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &HetGraph,
        step: &Step<'_, T>,
        rng: &mut R,
    ) -> Result<ForwardOut<T>, ModelError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = (0..self.params.len())
            .map(|id| tape.param(id, self.params.get(id)))
            .collect();
        let v = |id: usize| vars[id];
        let lay = &self.layout;
        let dropout = match step.mode {
            Mode::Train => self.config.dropout,
            Mode::Infer => 0.0,
        };
        let t = &mut tape;
        let proj: Vec<InputProjection<Var>> = lay
            .proj
            .iter()
            .map(|p| match *p {
                InputProjection::Linear { w, b } => InputProjection::Linear { w: v(w), b: v(b) },
                InputProjection::Embedding(e) => InputProjection::Embedding(v(e)),
            })
            .collect();
        let mut inputs = project_inputs(t, g, step.plan, &proj)?;
        let target = g.target_type();
        let mut x_tilde = inputs[target].expect("batch is non-empty");
        if let (Some((z, gw, gb)), Some(inj)) = (lay.label, step.injection) {
            x_tilde = mask_and_inject(t, x_tilde, inj, v(z), v(gw), v(gb))?;
        }
        inputs[target] = Some(x_tilde);
        for x in inputs.iter_mut().flatten() {
            *x = t.dropout(*x, dropout, rng);
        }
        let layers: Vec<SemanticLayer<Var>> = lay
            .semantic
            .iter()
            .map(|l| SemanticLayer {
                w_self: v(l.w_self),
                w_rel: l.w_rel.iter().map(|&r| v(r)).collect(),
            })
            .collect();
        let h_sem = semantic_forward(t, g, step.plan, inputs, &layers, dropout, rng)?;

        let (h, h_struct, gamma) = match (lay.structural, lay.fuse, step.structural) {
            (Some(sp), Some((fw, fb)), Some(plan)) => {
                let sp = StructuralParams {
                    homo: mlp_vars(&sp.homo, &v),
                    hetero: mlp_vars(&sp.hetero, &v),
                    gate_w: v(sp.gate_w),
                    gate_b: v(sp.gate_b),
                };
                let (hh, he) = branch_aggregate(t, x_tilde, plan)?;
                let branches = self.config.ablation.branches();
                let hr = structural_fuse(t, hh, he, &sp, branches, dropout, rng)?;
                let (h, gamma) = fuse(t, h_sem, hr, v(fw), v(fb))?;
                (h, Some(hr), Some(gamma))
            }
            (Some(_), _, None) => {
                return Err(ModelError::Config("structural plan missing".into()));
            }
            _ => (h_sem, None, None),
        };
        let (cw, cb) = lay.classifier;
        let logits = t.matmul(h, v(cw))?;
        let logits = t.add_row(logits, v(cb))?;
        Ok(ForwardOut {
            nodes: step.plan.batch().to_vec(),
            tape,
            x_tilde,
            h_sem,
            h_struct,
            gamma,
            h,
            logits,
        })
    }
}

fn mlp_vars(m: &Mlp<usize>, v: &impl Fn(usize) -> Var) -> Mlp<Var> {
    Mlp {
        w1: v(m.w1),
        b1: v(m.b1),
        w2: v(m.w2),
        b2: v(m.b2),
    }
}

impl<T: Scalar> ForwardOut<T> {
    /// `(L_cls, L_dec, L)` over the labeled rows among `rows`. The
    /// decoupling term covers every output row.
    pub fn losses(
        &mut self,
        rows: &[usize],
        labels: &crate::graph::Labels,
        alpha: f64,
        variant: DecVariant,
    ) -> Result<(Var, Option<Var>, Var), ModelError> {
        let l_cls = classification_loss(&mut self.tape, self.logits, rows, &self.nodes, labels)?;
        let l_dec = match self.h_struct {
            Some(hr) => Some(decouple_loss(&mut self.tape, self.h_sem, hr, variant)?),
            None => None,
        };
        let l = total_loss(&mut self.tape, l_cls, l_dec, alpha)?;
        Ok((l_cls, l_dec, l))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        self.tape.value(v)
    }
}
