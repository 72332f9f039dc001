//! Synthetic graphs: the symmetric author/paper construction, homophilous
//! author groups, clique-level label injection and the smoother bias
//! simulation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::graph::{
    FeatureMatrix, GraphError, GraphParts, HetGraph, Labels, RelationType, Splits,
};
use crate::metapath::{build_induced_graph, Metapath};
use crate::nn::derive_seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("each class needs at least two authors to form a same-label pair")]
    SameClassPairRequired,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn author_paper(
    n_authors: usize,
    papers: &[Vec<usize>],
    features: FeatureMatrix,
    num_classes: usize,
    labels: Labels,
    splits: Splits,
) -> Result<HetGraph, GraphError> {
    let mut writes = Vec::new();
    for (p, authors) in papers.iter().enumerate() {
        writes.extend(authors.iter().map(|&a| (a, p)));
    }
    let rev = writes.iter().map(|&(a, p)| (p, a)).collect();
    HetGraph::new(GraphParts {
        node_types: vec!["author".into(), "paper".into()],
        node_counts: vec![n_authors, papers.len()],
        relations: vec![
            RelationType { name: "writes".into(), src: 0, dst: 1, reverse_of: None },
            RelationType { name: "written_by".into(), src: 1, dst: 0, reverse_of: Some(0) },
        ],
        edges: vec![writes, rev],
        features: vec![Some(features), None],
        target_type: 0,
        num_classes,
        labels,
        splits,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Theorem1Config {
    /// Authors per class.
    pub n: usize,
    pub m_same: usize,
    pub m_diff: usize,
    pub dim: usize,
}

impl Default for Theorem1Config {
    fn default() -> Self {
        Theorem1Config { n: 20, m_same: 3, m_diff: 1, dim: 4 }
    }
}

/// Authors `a_i = i` (class 0) and `b_i = n + i` (class 1), all with the
/// same all-ones feature row. The pair `(a_i, b_i)` shares `m_diff`
/// papers, the first being the baseline paper `p_i`; the pairs
/// `(a_i, a_{i+1})` and `(b_i, b_{i+1})` (indices mod `n`) share `m_same`
/// papers each. Node `i` of either class is train when `i % 4 < 2`, val
/// when `i % 4 == 2`, test otherwise.
pub fn gen_theorem1(cfg: &Theorem1Config) -> Result<HetGraph, SynthError> {
    if cfg.n < 2 {
        return Err(SynthError::SameClassPairRequired);
    }
    if cfg.m_diff < 1 || cfg.m_same <= cfg.m_diff {
        return Err(SynthError::Config("need m_same > m_diff >= 1".into()));
    }
    if cfg.dim == 0 {
        return Err(SynthError::Config("feature dimension must be positive".into()));
    }
    Ok(theorem1_graph(cfg.n, cfg.m_same, cfg.m_diff, cfg.dim)?)
}

/// Only the baseline papers `p_i = {a_i, b_i}`.
pub fn gen_theorem1_baseline(n: usize, dim: usize) -> Result<HetGraph, SynthError> {
    if n < 1 || dim == 0 {
        return Err(SynthError::Config("need n >= 1 and dim >= 1".into()));
    }
    Ok(theorem1_graph(n, 0, 1, dim)?)
}

fn theorem1_graph(n: usize, m_same: usize, m_diff: usize, dim: usize) -> Result<HetGraph, GraphError> {
    let mut papers: Vec<Vec<usize>> = (0..n).map(|i| vec![i, n + i]).collect();
    for i in 0..n {
        papers.extend(std::iter::repeat(vec![i, n + i]).take(m_diff - 1));
    }
    // with two authors per class the cycle has a single edge
    let pairs = if n == 2 { 1 } else { n };
    for i in 0..pairs {
        let j = (i + 1) % n;
        papers.extend(std::iter::repeat(vec![i, j]).take(m_same));
        papers.extend(std::iter::repeat(vec![n + i, n + j]).take(m_same));
    }
    let labels = Labels::Single((0..2 * n).map(|v| Some(usize::from(v >= n))).collect());
    let mut splits = Splits::default();
    for v in 0..2 * n {
        match (v % n) % 4 {
            0 | 1 => splits.train.push(v),
            2 => splits.val.push(v),
            _ => splits.test.push(v),
        }
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    let features = FeatureMatrix::new(2 * n, dim, vec![1.0; 2 * n * dim])?;
    author_paper(2 * n, &papers, features, 2, labels, splits)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupConfig {
    pub groups: usize,
    pub group_size: usize,
    pub classes: usize,
    /// Share of groups whose members all share one label; the others have
    /// one member with a different label.
    pub pure_fraction: f64,
    pub dim: usize,
    /// Class signal added to the Gaussian noise of the features.
    pub signal: f64,
    pub seed: u64,
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig {
            groups: 60,
            group_size: 6,
            classes: 3,
            pure_fraction: 0.4,
            dim: 16,
            signal: 1.0,
            seed: 0,
        }
    }
}

/// Authors in disjoint groups, each group writing one paper together, so
/// every group is a clique under author-paper-author. Splits are a shuffled
/// 60/20/20 partition.
pub fn gen_author_groups(cfg: &GroupConfig) -> Result<HetGraph, SynthError> {
    if cfg.groups == 0 || cfg.group_size < 2 || cfg.classes < 2 || cfg.dim == 0 {
        return Err(SynthError::Config(
            "need groups >= 1, group_size >= 2, classes >= 2, dim >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.groups * cfg.group_size;
    let mut papers = Vec::with_capacity(cfg.groups);
    let mut labels = vec![0usize; n];
    for gi in 0..cfg.groups {
        let members: Vec<usize> = (gi * cfg.group_size..(gi + 1) * cfg.group_size).collect();
        let main = rng.gen_range(0..cfg.classes);
        let pure = rng.gen::<f64>() < cfg.pure_fraction;
        for &v in &members {
            labels[v] = main;
        }
        if !pure {
            let other = (main + rng.gen_range(1..cfg.classes)) % cfg.classes;
            labels[*members.last().expect("group_size >= 2")] = other;
        }
        papers.push(members);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (tr, va) = (n * 6 / 10, n * 8 / 10);
    let mut splits = Splits {
        train: order[..tr].to_vec(),
        val: order[tr..va].to_vec(),
        test: order[va..].to_vec(),
    };
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    let features = class_features(&labels, cfg.classes, cfg.dim, cfg.signal, derive_seed(cfg.seed, 1));
    Ok(author_paper(
        n,
        &papers,
        features,
        cfg.classes,
        Labels::Single(labels.into_iter().map(Some).collect()),
        splits,
    )?)
}

fn class_features(labels: &[usize], classes: usize, dim: usize, signal: f64, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(labels.len() * dim);
    for &y in labels {
        for j in 0..dim {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let mean = if j % classes == y { signal } else { 0.0 };
            data.push((mean + noise) as f32);
        }
    }
    FeatureMatrix::new(labels.len(), dim, data).expect("sized to fit")
}

/// Replaces target features with Gaussian noise plus a class signal in the
/// coordinates `j ≡ y (mod C)`. Single-label graphs only.
pub fn with_class_features(g: &HetGraph, dim: usize, signal: f64, seed: u64) -> Result<HetGraph, SynthError> {
    let y = g
        .labels()
        .single()
        .ok_or_else(|| SynthError::Config("class features need single labels".into()))?;
    let labels: Vec<usize> = y.iter().map(|l| l.unwrap_or(0)).collect();
    let mut parts = g.parts().clone();
    parts.features[g.target_type()] = Some(class_features(&labels, g.num_classes(), dim, signal, seed));
    Ok(HetGraph::new(parts)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InjectMode {
    High,
    Low,
}

impl std::str::FromStr for InjectMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "high" => Ok(InjectMode::High),
            "low" => Ok(InjectMode::Low),
            other => Err(format!("unknown injection mode {other:?}")),
        }
    }
}

/// Connected components of size >= 2 in the union of the metapath-induced
/// graphs, each sorted, ordered by smallest member.
pub fn metapath_cliques(g: &HetGraph, metapaths: &[Metapath]) -> Vec<Vec<usize>> {
    let n = g.num_targets();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut v: usize) -> usize {
        while p[v] != v {
            p[v] = p[p[v]];
            v = p[v];
        }
        v
    }
    for p in metapaths {
        let ig = build_induced_graph(g, p);
        for (u, v, _) in ig.edges() {
            let (a, b) = (root(&mut parent, u), root(&mut parent, v));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut comps: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..n {
        let r = root(&mut parent, v);
        comps.entry(r).or_default().push(v);
    }
    comps.into_values().filter(|c| c.len() >= 2).collect()
}

/// Relabels a `rho` share of metapath cliques. Every clique draws its
/// selection number, label and offset regardless of `rho`, so the cliques
/// chosen at a smaller `rho` stay chosen at a larger one. HIGH gives a
/// selected clique one shared label; LOW deals classes round-robin over its
/// members. Unlabeled nodes stay unlabeled; topology is untouched.
pub fn sbm_inject(
    g: &HetGraph,
    metapaths: &[Metapath],
    rho: f64,
    mode: InjectMode,
    seed: u64,
) -> Result<HetGraph, SynthError> {
    inject_cliques(g, &metapath_cliques(g, metapaths), rho, mode, seed)
}

/// [`sbm_inject`] over explicitly given cliques.
pub fn inject_cliques(
    g: &HetGraph,
    cliques: &[Vec<usize>],
    rho: f64,
    mode: InjectMode,
    seed: u64,
) -> Result<HetGraph, SynthError> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(SynthError::Config("rho must lie in [0, 1]".into()));
    }
    let c = g.num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = g.labels().clone();
    for clique in cliques {
        let u: f64 = rng.gen();
        let shared = rng.gen_range(0..c);
        let offset = rng.gen_range(0..c);
        if u >= rho {
            continue;
        }
        let members: Vec<usize> = clique.iter().copied().filter(|&v| labels.is_labeled(v)).collect();
        for (k, &v) in members.iter().enumerate() {
            let y = match mode {
                InjectMode::High => shared,
                InjectMode::Low => (offset + k) % c,
            };
            match &mut labels {
                Labels::Single(l) => l[v] = Some(y),
                Labels::Multi(l) => l[v] = Some((0..c).map(|j| j == y).collect()),
            }
        }
    }
    Ok(g.with_labels(labels)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasRow {
    pub q: f64,
    pub empirical: f64,
    pub closed_form: f64,
}

/// Mean squared bias of a normalized linear smoother whose neighbors carry
/// `y` (homophilic) or `-y` (heterophilic), with heterophilic mass `q`, over
/// `trials` random nodes with random degrees and weights.
pub fn squared_bias<R: Rng + ?Sized>(q: f64, trials: usize, rng: &mut R) -> f64 {
    let mut total = 0.0;
    for _ in 0..trials {
        let y: f64 = if rng.gen() { 1.0 } else { -1.0 };
        let homo = rng.gen_range(1..=10);
        let hetero = rng.gen_range(1..=10);
        let mut pred = 0.0;
        for (count, mass, sign) in [(homo, 1.0 - q, 1.0), (hetero, q, -1.0)] {
            let raw: Vec<f64> = (0..count).map(|_| rng.gen_range(0.01..1.0)).collect();
            let z: f64 = raw.iter().sum();
            pred += raw.iter().map(|w| mass * w / z * sign * y).sum::<f64>();
        }
        total += (pred - y).powi(2);
    }
    total / trials as f64
}

pub fn bias_simulation(q_grid: &[f64], trials: usize, seed: u64) -> Result<Vec<BiasRow>, SynthError> {
    if q_grid.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(SynthError::Config("q values must lie in [0, 1]".into()));
    }
    if trials == 0 {
        return Err(SynthError::Config("need at least one trial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(q_grid
        .iter()
        .map(|&q| BiasRow {
            q,
            empirical: squared_bias(q, trials, &mut rng),
            closed_form: 4.0 * q * q,
        })
        .collect())
}
