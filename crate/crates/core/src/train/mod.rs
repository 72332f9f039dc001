//! Training loop: label masking, both channels, pseudo-label refresh,
//! full-batch and sampled mini-batch updates, evaluation and checkpoints.

mod checkpoint;
mod config;

use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{HetGraph, Labels, Split};
use crate::metapath::{
    build_induced_graph, partition_neighbors, structural_weights, Metapath, Partition,
    StructuralWeights,
};
use crate::metrics::{argmax, score_logits, Metrics};
use crate::model::{
    HeterSeed, InjectionPlan, MaskStream, Mode, ModelError, Sampling, SemanticPlan, Step,
    StructuralPlan,
};
use crate::nn::{derive_seed, Adam, NnError, Tensor};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{Preset, TrainConfig};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("checkpoint does not match the graph: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<crate::metapath::MetapathError> for TrainError {
    fn from(e: crate::metapath::MetapathError) -> Self {
        TrainError::Model(e.into())
    }
}

const STREAM_INIT: u64 = 1;
const STREAM_DROPOUT: u64 = 2;
const STREAM_MASK: u64 = 3;
const STREAM_SAMPLE: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    GroundTruth,
    Predicted,
}

/// Labels used to split neighbors: ground truth on labeled train nodes,
/// model predictions elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabels {
    pub labels: Labels,
    pub provenance: Vec<Provenance>,
}

impl PseudoLabels {
    /// Before any prediction exists: train labels only, everything else
    /// unassigned (and so heterophilic to every neighbor).
    pub fn bootstrap(g: &HetGraph, train_mask: &[bool]) -> Self {
        let keep = |v: usize| train_mask[v] && g.labels().is_labeled(v);
        let labels = match g.labels() {
            Labels::Single(l) => {
                Labels::Single((0..l.len()).map(|v| if keep(v) { l[v] } else { None }).collect())
            }
            Labels::Multi(l) => Labels::Multi(
                (0..l.len())
                    .map(|v| if keep(v) { l[v].clone() } else { None })
                    .collect(),
            ),
        };
        let provenance = (0..labels.len())
            .map(|v| if keep(v) { Provenance::GroundTruth } else { Provenance::Predicted })
            .collect();
        PseudoLabels { labels, provenance }
    }
}

/// Ground truth on labeled train nodes; elsewhere the argmax of `logits`
/// (multi-label: classes with probability above 0.5, or the argmax when
/// none is).
pub fn refresh_pseudo_labels(g: &HetGraph, train_mask: &[bool], logits: &[f32]) -> PseudoLabels {
    let c = g.num_classes();
    let n = g.num_targets();
    let row = |v: usize| -> Vec<f64> { logits[v * c..(v + 1) * c].iter().map(|&x| x as f64).collect() };
    let gt = |v: usize| train_mask[v] && g.labels().is_labeled(v);
    let provenance = (0..n)
        .map(|v| if gt(v) { Provenance::GroundTruth } else { Provenance::Predicted })
        .collect();
    let labels = match g.labels() {
        Labels::Single(l) => Labels::Single(
            (0..n)
                .map(|v| if gt(v) { l[v] } else { Some(argmax(&row(v))) })
                .collect(),
        ),
        Labels::Multi(l) => Labels::Multi(
            (0..n)
                .map(|v| {
                    if gt(v) {
                        return l[v].clone();
                    }
                    let r = row(v);
                    let mut set: Vec<bool> = r.iter().map(|&x| x > 0.0).collect();
                    if !set.iter().any(|&b| b) {
                        set[argmax(&r)] = true;
                    }
                    Some(set)
                })
                .collect(),
        ),
    };
    PseudoLabels { labels, provenance }
}

/// Outputs of a full-graph inference pass, one row per target node.
#[derive(Clone, Debug)]
pub struct Inference {
    pub num_classes: usize,
    pub logits: Vec<f32>,
    pub h_sem: Tensor<f32>,
    pub h_struct: Option<Tensor<f32>>,
}

impl Inference {
    /// Mean over nodes of `|cos(h_s, h_r)|`; zero rows count as 0.
    pub fn mean_abs_cosine(&self) -> Option<f64> {
        let hr = self.h_struct.as_ref()?;
        let n = self.h_sem.rows();
        let mut total = 0.0;
        for v in 0..n {
            let (a, b) = (self.h_sem.row(v), hr.row(v));
            let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
            let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            if na > 0.0 && nb > 0.0 {
                total += (dot / (na * nb)).abs();
            }
        }
        Some(if n == 0 { 0.0 } else { total / n as f64 })
    }

    pub fn predictions(&self) -> Vec<usize> {
        let c = self.num_classes;
        (0..self.logits.len() / c)
            .map(|v| argmax(&self.logits[v * c..(v + 1) * c].iter().map(|&x| x as f64).collect::<Vec<_>>()))
            .collect()
    }

    /// Metrics over `nodes` (global target indices).
    pub fn score(&self, g: &HetGraph, nodes: &[usize]) -> Metrics {
        let c = self.num_classes;
        let mut logits = Vec::with_capacity(nodes.len() * c);
        for &v in nodes {
            logits.extend_from_slice(&self.logits[v * c..(v + 1) * c]);
        }
        score_logits(&logits, c, nodes, g.labels())
    }
}

/// Structure shared by training and inference: the cached metapath weights
/// and the full-graph plan.
pub struct Context<'g> {
    pub graph: &'g HetGraph,
    pub weights: Option<Arc<StructuralWeights>>,
    pub plan: Arc<SemanticPlan<f32>>,
    pub train_mask: Vec<bool>,
}

impl<'g> Context<'g> {
    pub fn new(g: &'g HetGraph, metapaths: &[Metapath], layers: usize, structural: bool) -> Result<Self, TrainError> {
        let weights = if structural {
            if metapaths.is_empty() {
                return Err(TrainError::Config("the structural channel needs metapaths".into()));
            }
            let graphs: Vec<_> = metapaths.iter().map(|p| build_induced_graph(g, p)).collect();
            Some(Arc::new(structural_weights(&graphs)?))
        } else {
            None
        };
        Ok(Context {
            graph: g,
            weights,
            plan: Arc::new(SemanticPlan::full(g, layers, None)),
            train_mask: g.splits().mask(Split::Train, g.num_targets()),
        })
    }

    pub fn partition(&self, pseudo: &PseudoLabels) -> Option<Partition> {
        self.weights.as_ref().map(|w| partition_neighbors(w, &pseudo.labels))
    }

    /// Full-graph forward without dropout; labeled train nodes receive their
    /// label embedding.
    pub fn infer(
        &self,
        model: &HeterSeed<f32>,
        partition: Option<&Partition>,
        beta: f64,
    ) -> Result<Inference, TrainError> {
        let g = self.graph;
        let sp = partition.map(|p| StructuralPlan::build(&self.plan, p));
        let inj = (!model.config.ablation.no_mask).then(|| {
            let stream = MaskStream { seed: 0, epoch: 0 };
            InjectionPlan::build(&self.plan, g.labels(), &self.train_mask, beta, Mode::Infer, stream, g.num_classes())
        });
        let step = Step {
            plan: &self.plan,
            structural: sp.as_ref(),
            injection: inj.as_ref(),
            mode: Mode::Infer,
        };
        // no dropout in inference, so this stream is never drawn from
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = model.forward(g, &step, &mut rng)?;
        Ok(Inference {
            num_classes: g.num_classes(),
            logits: out.value(out.logits).data().to_vec(),
            h_sem: out.value(out.h_sem).clone(),
            h_struct: out.h_struct.map(|v| out.value(v).clone()),
        })
    }
}

/// Metrics of `model` on one split.
pub fn evaluate(
    ctx: &Context<'_>,
    model: &HeterSeed<f32>,
    pseudo: &PseudoLabels,
    beta: f64,
    split: Split,
) -> Result<Metrics, TrainError> {
    let nodes = ctx.graph.splits().get(split);
    if nodes.is_empty() {
        return Err(TrainError::EmptySplit(split.name()));
    }
    let inf = ctx.infer(model, ctx.partition(pseudo).as_ref(), beta)?;
    Ok(inf.score(ctx.graph, nodes))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_cls: f64,
    pub l_dec: f64,
    pub loss: f64,
    pub val: Option<Metrics>,
}

pub struct TrainReport {
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    /// Parameters from the best validation epoch.
    pub model: HeterSeed<f32>,
    pub pseudo: PseudoLabels,
    pub test: Option<Metrics>,
    /// Full-graph inference of the returned model.
    pub inference: Inference,
}

impl TrainReport {
    /// Per-epoch TSV followed by one line of test metrics.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch\tL_cls\tL_dec\tL\tval_macro\tval_micro")?;
        for e in &self.log {
            let (ma, mi) = e.val.map_or((f64::NAN, f64::NAN), |m| (m.macro_f1, m.micro_f1));
            writeln!(w, "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}", e.epoch, e.l_cls, e.l_dec, e.loss, ma, mi)?;
        }
        match self.test {
            Some(m) => writeln!(
                w,
                "test\tmacro_f1={:.6}\tmicro_f1={:.6}\tap={:.6}",
                m.macro_f1,
                m.micro_f1,
                m.ap.unwrap_or(f64::NAN)
            ),
            None => writeln!(w, "test\tempty"),
        }
    }
}

pub struct Trainer<'g> {
    ctx: Context<'g>,
    cfg: TrainConfig,
    model: HeterSeed<f32>,
    adam: Adam<f32>,
    pseudo: PseudoLabels,
    partition: Option<Partition>,
    full_structural: Option<Arc<StructuralPlan<f32>>>,
    last: Option<Inference>,
    epoch: usize,
    dropout_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
}

impl<'g> Trainer<'g> {
    pub fn new(g: &'g HetGraph, metapaths: &[Metapath], cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let ctx = Context::new(g, metapaths, cfg.layers, !cfg.ablation.no_shc)?;
        let model = HeterSeed::new(g, cfg.model_config(), derive_seed(cfg.seed, STREAM_INIT))?;
        let mut pseudo = PseudoLabels::bootstrap(g, &ctx.train_mask);
        if ctx.weights.is_some() {
            let boot = ctx.partition(&pseudo);
            let inf = ctx.infer(&model, boot.as_ref(), cfg.beta)?;
            pseudo = refresh_pseudo_labels(g, &ctx.train_mask, &inf.logits);
        }
        let mut t = Trainer {
            adam: Adam::new(cfg.lr),
            dropout_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_DROPOUT)),
            sample_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_SAMPLE)),
            ctx,
            cfg,
            model,
            pseudo,
            partition: None,
            full_structural: None,
            last: None,
            epoch: 0,
        };
        t.repartition();
        Ok(t)
    }

    fn repartition(&mut self) {
        self.partition = self.ctx.partition(&self.pseudo);
        self.full_structural = self
            .partition
            .as_ref()
            .map(|p| Arc::new(StructuralPlan::build(&self.ctx.plan, p)));
    }

    pub fn context(&self) -> &Context<'g> {
        &self.ctx
    }

    pub fn model(&self) -> &HeterSeed<f32> {
        &self.model
    }

    pub fn pseudo(&self) -> &PseudoLabels {
        &self.pseudo
    }

    pub fn partition(&self) -> Option<&Partition> {
        self.partition.as_ref()
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn last_inference(&self) -> Option<&Inference> {
        self.last.as_ref()
    }

    fn mask_stream(&self) -> MaskStream {
        MaskStream {
            seed: derive_seed(self.cfg.seed, STREAM_MASK),
            epoch: self.epoch as u64,
        }
    }

    /// One forward/backward/update on the batch described by `plan`.
    /// Returns `(L_cls, L_dec, L)` or `None` when the batch holds no
    /// labeled train node.
    fn update(
        &mut self,
        plan: &SemanticPlan<f32>,
        structural: Option<&StructuralPlan<f32>>,
    ) -> Result<Option<(f64, f64, f64)>, TrainError> {
        let g = self.ctx.graph;
        let rows: Vec<usize> = plan
            .batch()
            .iter()
            .enumerate()
            .filter(|&(_, &v)| self.ctx.train_mask[v] && g.labels().is_labeled(v))
            .map(|(i, _)| i)
            .collect();
        if rows.is_empty() {
            return Ok(None);
        }
        let inj = (!self.cfg.ablation.no_mask).then(|| {
            InjectionPlan::build(
                plan,
                g.labels(),
                &self.ctx.train_mask,
                self.cfg.beta,
                Mode::Train,
                self.mask_stream(),
                g.num_classes(),
            )
        });
        let step = Step {
            plan,
            structural,
            injection: inj.as_ref(),
            mode: Mode::Train,
        };
        let mut out = self.model.forward(g, &step, &mut self.dropout_rng)?;
        let (l_cls, l_dec, l) = out.losses(&rows, g.labels(), self.cfg.effective_alpha(), self.cfg.dec_variant)?;
        out.tape.backward(l)?;
        self.model.params.accumulate_grads(&out.tape)?;
        self.adam.step(&mut self.model.params)?;
        let val = |v| out.value(v).item() as f64;
        Ok(Some((val(l_cls), l_dec.map_or(0.0, val), val(l))))
    }

    /// Runs one epoch and the inference sweep after it.
    pub fn step_epoch(&mut self) -> Result<EpochLog, TrainError> {
        if self.epoch > 0 && self.epoch % self.cfg.refresh_period == 0 {
            if let Some(inf) = &self.last {
                self.pseudo = refresh_pseudo_labels(self.ctx.graph, &self.ctx.train_mask, &inf.logits);
                self.repartition();
            }
        }
        debug_assert!(self.pseudo_invariant_holds());
        let (mut sums, mut batches) = ((0.0, 0.0, 0.0), 0usize);
        let mut add = |r: Option<(f64, f64, f64)>| {
            if let Some((a, b, c)) = r {
                sums = (sums.0 + a, sums.1 + b, sums.2 + c);
                batches += 1;
            }
        };
        if self.cfg.batch_size == 0 {
            let plan = self.ctx.plan.clone();
            let sp = self.full_structural.clone();
            add(self.update(&plan, sp.as_deref())?);
        } else {
            let g = self.ctx.graph;
            let mut order: Vec<usize> = (0..g.num_targets()).collect();
            order.shuffle(&mut self.sample_rng);
            for chunk in order.chunks(self.cfg.batch_size) {
                let mut batch = chunk.to_vec();
                batch.sort_unstable();
                let fanout = self.cfg.fanout.clone();
                let plan = SemanticPlan::build(
                    g,
                    &batch,
                    self.cfg.layers,
                    Some(Sampling { fanout: &fanout, rng: &mut self.sample_rng }),
                    self.partition.as_ref(),
                );
                let sp = self.partition.as_ref().map(|p| StructuralPlan::build(&plan, p));
                add(self.update(&plan, sp.as_ref())?);
            }
        }
        let inf = self.ctx.infer(&self.model, self.partition.as_ref(), self.cfg.beta)?;
        let val_nodes = self.ctx.graph.splits().get(Split::Val);
        let val = (!val_nodes.is_empty()).then(|| inf.score(self.ctx.graph, val_nodes));
        self.last = Some(inf);
        let n = batches.max(1) as f64;
        let log = EpochLog {
            epoch: self.epoch + 1,
            l_cls: sums.0 / n,
            l_dec: sums.1 / n,
            loss: sums.2 / n,
            val,
        };
        self.epoch += 1;
        Ok(log)
    }

    fn pseudo_invariant_holds(&self) -> bool {
        let g = self.ctx.graph;
        (0..g.num_targets()).all(|v| {
            !(self.ctx.train_mask[v] && g.labels().is_labeled(v))
                || self.pseudo.provenance[v] == Provenance::GroundTruth
        })
    }

    /// Trains for the configured epochs and keeps the parameters of the
    /// epoch with the best validation Micro-F1, preferring later epochs on
    /// ties (so the last epoch without a validation split).
    pub fn run(mut self) -> Result<TrainReport, TrainError> {
        let mut log = Vec::with_capacity(self.cfg.epochs);
        let mut best: Option<(f64, usize, HeterSeed<f32>, PseudoLabels)> = None;
        for _ in 0..self.cfg.epochs {
            let e = self.step_epoch()?;
            let score = e.val.map_or(f64::NEG_INFINITY, |m| m.micro_f1);
            // ties go to the later epoch
            let better = match &best {
                None => true,
                Some((s, ..)) => score >= *s,
            };
            if better {
                best = Some((score, e.epoch, self.model.clone(), self.pseudo.clone()));
            }
            log.push(e);
        }
        let (best_epoch, model, pseudo) = match best {
            Some((_, e, m, p)) => (e, m, p),
            None => (0, self.model.clone(), self.pseudo.clone()),
        };
        let inference = self.ctx.infer(&model, self.ctx.partition(&pseudo).as_ref(), self.cfg.beta)?;
        let test_nodes = self.ctx.graph.splits().get(Split::Test);
        let test = (!test_nodes.is_empty()).then(|| inference.score(self.ctx.graph, test_nodes));
        Ok(TrainReport {
            log,
            best_epoch,
            model,
            pseudo,
            test,
            inference,
        })
    }
}

/// Trains on the whole graph at once (`batch_size` is forced to 0).
pub fn train_full_batch(g: &HetGraph, metapaths: &[Metapath], cfg: &TrainConfig) -> Result<TrainReport, TrainError> {
    Trainer::new(g, metapaths, TrainConfig { batch_size: 0, ..cfg.clone() })?.run()
}

/// Trains on shuffled batches of target nodes with sampled neighborhoods.
pub fn train_mini_batch(g: &HetGraph, metapaths: &[Metapath], cfg: &TrainConfig) -> Result<TrainReport, TrainError> {
    if cfg.batch_size == 0 {
        return Err(TrainError::Config("mini-batch training needs batch_size >= 1".into()));
    }
    Trainer::new(g, metapaths, cfg.clone())?.run()
}
